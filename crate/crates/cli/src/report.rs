use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ffsim::hamiltonian_tomography::{BlochFit, CR_LABELS};
use ffsim::RateTable;

use crate::manifest::{Manifest, RESULTS};
use crate::pipeline::Results;

/// Human-readable summary of a result directory.
pub fn render(dir: &Path) -> Result<String, String> {
    let manifest = Manifest::read(dir)?;
    manifest.verify(dir)?;
    let text = fs::read_to_string(dir.join(RESULTS)).map_err(|e| format!("cannot read {RESULTS}: {e}"))?;
    let results: Results = serde_json::from_str(&text).map_err(|e| format!("corrupt {RESULTS}: {e}"))?;

    let mut out = String::new();
    let _ = writeln!(out, "experiment  {}", manifest.experiment);
    let _ = writeln!(out, "seed        {}", manifest.seed.map_or("none".into(), |s| s.to_string()));
    let _ = writeln!(out, "config      sha256:{}", manifest.config_sha256);
    let _ = writeln!(out, "version     {} {}", manifest.tool, manifest.version);
    out.push('\n');
    match &results {
        Results::Simulate(r) => {
            if let Some(last) = r.samples.last() {
                let _ = writeln!(out, "final state at t = {} µs (purity {:.4})", last.time, last.purity);
                for (q, b) in last.bloch.iter().enumerate() {
                    let _ = writeln!(out, "  q{q}  <X> {:>8.4}  <Y> {:>8.4}  <Z> {:>8.4}", b[0], b[1], b[2]);
                }
            }
        }
        Results::Qpt(r) => {
            let res = &r.series.resolution;
            out.push_str(&rate_table(&res.rates, None));
            let _ = writeln!(out, "\n{:<8}{:>12}{:>8}", "label", "std dev", "branch");
            for (l, b) in &res.labels {
                let _ = writeln!(out, "{:<8}{:>12.4}{:>8}", l.to_string(), b.std_dev, if b.ambiguous { "?" } else { "ok" });
            }
            let lambdas: Vec<String> = r.series.points.iter().map(|p| format!("{:.4}", p.lambda0)).collect();
            let _ = writeln!(out, "\nlambda0 per duration: {}", lambdas.join(" "));
        }
        Results::Additivity(r) => {
            let _ = writeln!(out, "{:<8}{:>11}{:>11}{:>11}", "label", "predicted", "measured", "deviation");
            for l in r.displayed_labels() {
                if let Some(d) = r.deviations.get(&l) {
                    let _ = writeln!(out, "{:<8}{:>11.4}{:>11.4}{:>11.4}", l.to_string(), d.predicted, d.measured, d.absolute);
                }
            }
        }
        Results::HamTomog(t) => {
            out.push_str(&rate_table(&t.rates, Some(&CR_LABELS)));
            out.push('\n');
            bloch_fit(&mut out, "control |0>", &t.fit0);
            bloch_fit(&mut out, "control |1>", &t.fit1);
            let _ = writeln!(out, "stark: c_ZI {:.4} MHz from f+ {:.4}, f- {:.4}", t.stark.c_zi, t.stark.f_plus, t.stark.f_minus);
        }
        Results::CalibratePhase(c) => {
            let _ = writeln!(out, "phase {:.5} rad ({:.4} pi), c_ZY {:.4} MHz after {} calls", c.phase, c.phase / PI, c.c_zy, c.calls());
            let _ = writeln!(out, "converged {}", c.converged);
        }
        Results::LowAmp(r) => {
            out.push_str(&r.report.summary());
            let f = &r.fit;
            let _ = writeln!(out, "\nfit: h = ({:.4}, {:.4}, {:.4}) MHz, T2 {:.2} µs, residual {:.4}", f.h_x, f.h_y, f.h_z, f.t2, f.residual);
            if let Some(b) = f.rabi_upper_bound {
                let _ = writeln!(out, "rabi below resolution, upper bound {b:.4} MHz");
            }
        }
        Results::DelayScan(r) => {
            let _ = writeln!(out, "{} repetition(s), {} delays", r.data.repetitions(), r.data.delays.len());
            let _ = writeln!(out, "{:<5}{:>8}{:>8}{:>9}{:>9}{:>9}{:>10}", "rep", "c0", "c1", "f0", "f1", "T2*", "residual");
            for (k, f) in r.fits.iter().enumerate() {
                match f {
                    Some(f) => {
                        let _ = writeln!(
                            out,
                            "{k:<5}{:>8.3}{:>8.3}{:>9.4}{:>9.4}{:>9.2}{:>10.4}",
                            f.c0, f.c1, f.f0, f.f1, f.t2_star, f.residual
                        );
                    }
                    None => {
                        let _ = writeln!(out, "{k:<5}  fit failed");
                    }
                }
            }
            if let Some(d) = r.ensemble.as_ref().and_then(|e| e.drift.as_ref()) {
                let _ = writeln!(out, "f0 drift: mean {:.4}, std {:.4}, spread {:.4} MHz", d.f0_mean, d.f0_std, d.f0_spread);
            }
        }
        Results::PurityScan(r) => {
            let min = r.points.iter().map(|p| p.purity).fold(f64::INFINITY, f64::min);
            let _ = writeln!(out, "{} delays, minimum purity {min:.4}", r.points.len());
            if r.revivals.is_empty() {
                out.push_str("no revivals\n");
            }
            for v in &r.revivals {
                let _ = writeln!(out, "revival at {:.2} µs, prominence {:.4}", v.time, v.prominence);
            }
        }
    }
    if !manifest.warnings.is_empty() {
        out.push_str("\nwarnings:\n");
        for w in &manifest.warnings {
            let _ = writeln!(out, "  warning: {w}");
        }
    }
    Ok(out)
}

fn rate_table(rates: &RateTable, order: Option<&[&str]>) -> String {
    let mut out = format!("{:<8}{:>12}\n", "label", "rate (MHz)");
    let rows: Vec<(String, f64)> = match order {
        Some(labels) => labels.iter().map(|l| (l.to_string(), rates.get(l))).collect(),
        None => rates.rates.iter().map(|(l, v)| (l.to_string(), *v)).collect(),
    };
    for (l, v) in rows {
        let _ = writeln!(out, "{l:<8}{v:>12.4}");
    }
    out
}

fn bloch_fit(out: &mut String, name: &str, f: &BlochFit) {
    let _ = writeln!(
        out,
        "{name}: omega_x {:.4}, omega_y {:.4}, delta {:.4} MHz, decay {:.4}/µs, residual {:.4}",
        f.omega_x, f.omega_y, f.delta, f.decay, f.residual
    );
}
