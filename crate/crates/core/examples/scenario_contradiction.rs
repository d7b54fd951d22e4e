//! Replay the case arguments: each labelled configuration either forces its
//! data or cannot reach Σ χ̂/î = 1/2.

use symplectic_index::ledger::{scenario_check, SCENARIOS};

fn main() -> symplectic_index::Result<()> {
    for label in SCENARIOS {
        let rep = scenario_check(label, 1e-3)?;
        let sup = rep.supremum_value.map(|s| format!("  sup Σ = {s:.6}")).unwrap_or_default();
        println!("{label}: {}{sup}", rep.verdict);
        for s in rep.steps.iter().take(4) {
            println!("  [{}] {} — {}", if s.holds { "ok" } else { "!!" }, s.claim, s.detail);
        }
        if rep.steps.len() > 4 {
            println!("  … {} more", rep.steps.len() - 4);
        }
    }
    Ok(())
}
