//! Columnar text outputs: retained chains and the combined sweep table.
//! Floats are printed with the shortest round-trip representation, so a
//! replayed run reproduces these files byte for byte.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};

use scotopic::mcmc::ChainSet;

use crate::docs::CellFile;

/// Writes every retained draw, prior and posterior side by side. One row per
/// draw: multiplex, chain, draw index, side, α, β, p̃₁…p̃_nmax, extension.
pub fn write_chains_csv(path: &Path, chains: &ChainSet) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);

    let mut header = String::from("multiplex,chain,draw,side,alpha,beta");
    for n in 1..=chains.n_max {
        header.push_str(&format!(",p_tilde_{n}"));
    }
    header.push_str(",extension");
    writeln!(w, "{header}")?;

    for m in &chains.multiplexes {
        for (side, group) in [("posterior", &m.posterior_chains), ("prior", &m.prior_chains)] {
            for (c, chain) in group.iter().enumerate() {
                for (i, draw) in chain.iter().enumerate() {
                    write!(w, "{},{c},{i},{side},{},{}", m.multiplex, draw.alpha, draw.beta)?;
                    for p in &draw.p_tilde[1..] {
                        write!(w, ",{p}")?;
                    }
                    match draw.extension {
                        Some(e) => writeln!(w, ",{e}")?,
                        None => writeln!(w, ",")?,
                    }
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

const COMBINED_HEADER: [&str; 28] = [
    "cell",
    "nbar_min",
    "nbar_max",
    "points",
    "trials",
    "p1",
    "noise_scale",
    "seed",
    "threshold",
    "completed",
    "failed",
    "flagged",
    "p_success_mean",
    "p_success_low",
    "p_success_high",
    "p_cover_mean",
    "p_cover_low",
    "p_cover_high",
    "hdi_kept",
    "hdi_mean",
    "hdi_sd",
    "hdi_low",
    "hdi_high",
    "mse_mean",
    "mse_sd",
    "mse_low",
    "mse_high",
    "error",
];

/// One row per cell and rejection threshold. Merit columns stay empty when
/// fewer than two replications survived or the cell errored out.
pub fn write_combined_csv(path: &Path, files: &[CellFile]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(COMBINED_HEADER)?;

    for f in files {
        let (completed, failed, flagged) = match &f.report {
            Some(r) => (r.records.len(), r.failures.len(), r.flagged_replications),
            None => (0, 0, 0),
        };
        for (threshold, merit) in f.thresholds.iter().zip(&f.merits) {
            let mut rec: Vec<String> = vec![
                f.cell.index.to_string(),
                f.cell.nbar_min.to_string(),
                f.cell.nbar_max.to_string(),
                f.cell.points.to_string(),
                f.cell.trials.to_string(),
                f.cell.p1.to_string(),
                f.cell.noise_scale.to_string(),
                f.seed.to_string(),
                threshold.to_string(),
                completed.to_string(),
                failed.to_string(),
                flagged.to_string(),
            ];
            match merit {
                Some(m) => {
                    rec.push(m.p_success.mean.to_string());
                    rec.push(m.p_success.low.to_string());
                    rec.push(m.p_success.high.to_string());
                    rec.push(m.p_a1_in_hdi.mean.to_string());
                    rec.push(m.p_a1_in_hdi.low.to_string());
                    rec.push(m.p_a1_in_hdi.high.to_string());
                    rec.push(m.n_hdi_kept.to_string());
                    match &m.hdi_length {
                        Some(h) => {
                            rec.push(h.mean.to_string());
                            rec.push(h.sd.to_string());
                            rec.push(h.boot_low.to_string());
                            rec.push(h.boot_high.to_string());
                        }
                        None => rec.extend(std::iter::repeat(String::new()).take(4)),
                    }
                    rec.push(m.mse.mean.to_string());
                    rec.push(m.mse.sd.to_string());
                    rec.push(m.mse.boot_low.to_string());
                    rec.push(m.mse.boot_high.to_string());
                }
                None => rec.extend(std::iter::repeat(String::new()).take(15)),
            }
            rec.push(f.error.clone().unwrap_or_default());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}
