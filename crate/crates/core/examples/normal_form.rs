//! Hide a known ⋄-product behind a random symplectic change of basis and read
//! the blocks back off the matrix.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use symplectic_index::symplectic::{
    assemble, classify_blocks, elliptic_height, floquet_multipliers, random_symplectic, splitting_jump, BlockLabel,
    SymplecticMatrix, Tolerances,
};

fn main() -> symplectic_index::Result<()> {
    let blocks = [
        BlockLabel::N1 { eig: 1, b: 1 },
        BlockLabel::R { theta: 2.0 },
        BlockLabel::Hyperbolic { lambda: -3.0 },
        BlockLabel::Quadruple { re: 1.2, im: 0.7 },
    ];
    let d = assemble(&blocks);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = random_symplectic(5, &mut rng, 0.4);
    let m = SymplecticMatrix::new(d)?.conjugate_by(&p)?;

    println!("hidden: {}", blocks.map(|b| b.to_string()).join(" ⋄ "));
    for z in floquet_multipliers(&m)? {
        println!("  multiplier {:+.6} {:+.6}i  |z| = {:.6}", z.re, z.im, z.norm());
    }
    let e = elliptic_height(&m, Tolerances::default().circle)?;
    println!("elliptic height e = {}", e.value);

    let dec = classify_blocks(&m, &Tolerances::default())?;
    let found: Vec<String> = dec.blocks.iter().map(|b| b.to_string()).collect();
    println!("recovered: {}", found.join(" ⋄ "));
    println!("reconstruction error {:.2e}", dec.reconstruction_error.unwrap_or(f64::NAN));

    // 2S⁺(1) − ν(1) over the blocks at eigenvalue 1.
    let worst = [BlockLabel::N1 { eig: 1, b: -1 }, BlockLabel::N1 { eig: 1, b: -1 }];
    println!("2S⁺ − ν for N1(1,1): {}", splitting_jump(&[BlockLabel::N1 { eig: 1, b: 1 }])?);
    println!("2S⁺ − ν for N1(1,-1)^⋄2: {}", splitting_jump(&worst)?);
    Ok(())
}
