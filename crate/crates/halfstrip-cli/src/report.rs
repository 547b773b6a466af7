//! Report envelopes and output plumbing. Every report embeds the config
//! hash, the seed, and the library version; report files are append-only,
//! named by config hash and timestamp. Report *content* never contains
//! timestamps, so a fixed seed reproduces byte-identical output.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::PathBuf;

use halfstrip::classify::ModelClassification;
use halfstrip::config::FormatKind;
use halfstrip::model::LineSet;
use halfstrip::simulate::{
    Decomposition, EmbeddedMoments, MaxDevProfile, MomentEstimate, OccupationRatio,
    TauTailProfile,
};
use halfstrip::weaklimit::WeakLimitReport;

#[derive(Serialize)]
#[serde(untagged)]
pub enum Payload {
    Classify(ModelClassification),
    Simulate {
        model_id: String,
        steps: u64,
        trials: u64,
        renewal_rate: MomentEstimate,
        occupation: Vec<(u64, MomentEstimate)>,
    },
    ExcursionStats {
        model_id: String,
        x0: u64,
        trials: u64,
        occupation: Vec<(String, OccupationRatio)>,
        moments: EmbeddedMoments,
        tau: TauTailProfile,
        dev: MaxDevProfile,
        excursion_count: usize,
        trailing_discarded: u64,
        #[serde(skip)]
        lines: LineSet,
        #[serde(skip)]
        decomposition: Decomposition,
    },
    Coupling {
        model_id: String,
        x0: u64,
        horizon: u64,
        trials: u64,
        per_step_bound_at_half_x0: f64,
        survival: Vec<(u64, f64)>,
    },
    WeakLimit {
        model_id: String,
        report: WeakLimitReport,
        qq: Vec<(f64, f64, f64)>,
    },
    HypothesisFailed {
        model_id: String,
        reason: String,
    },
}

impl Payload {
    fn text(&self) -> String {
        match self {
            Payload::Classify(c) => {
                let values: Vec<String> = c
                    .result
                    .decision_values
                    .iter()
                    .map(|(k, v)| format!("{k} = {v:.12}"))
                    .collect();
                format!(
                    "verdict: {:?}{}\ndecision values: {}\nparams: {:?} ({:?})\npi: {:?}\n",
                    c.result.verdict,
                    if c.result.boundary { " (boundary)" } else { "" },
                    values.join(", "),
                    c.params.mode,
                    c.params_source,
                    c.pi.pi(),
                )
            }
            Payload::Simulate {
                model_id,
                steps,
                trials,
                renewal_rate,
                occupation,
            } => {
                let mut out = format!(
                    "model: {model_id}\nsteps: {steps}, trials: {trials}\nrenewal rate N(n)/n: {:.6} +- {:.6}\n",
                    renewal_rate.mean, renewal_rate.ci_halfwidth
                );
                for (x, est) in occupation {
                    out.push_str(&format!(
                        "occupation nu({x}): {:.6} +- {:.6}\n",
                        est.mean, est.ci_halfwidth
                    ));
                }
                out
            }
            Payload::ExcursionStats {
                model_id,
                x0,
                trials,
                occupation,
                moments,
                tau,
                dev,
                excursion_count,
                trailing_discarded,
                ..
            } => {
                let mut out = format!("model: {model_id}\nx0: {x0}, trials: {trials}\n");
                for (label, occ) in occupation {
                    out.push_str(&format!(
                        "occupation[{label}] per excursion: {:.4} +- {:.4} (boundary hits: {})\n",
                        occ.estimate.mean, occ.estimate.ci_halfwidth, occ.boundary_hits
                    ));
                }
                out.push_str(&format!(
                    "embedded m1: {:.6} +- {:.6} (conditional {:.6})\n",
                    moments.m1.mean, moments.m1.ci_halfwidth, moments.m1_conditional.mean
                ));
                out.push_str(&format!(
                    "embedded m2: {:.6} +- {:.6} (conditional {:.6})\n",
                    moments.m2.mean, moments.m2.ci_halfwidth, moments.m2_conditional.mean
                ));
                out.push_str(&format!(
                    "duration log-survival slope: {:.4} (r2 {:.4})\n",
                    tau.log_slope, tau.r_squared
                ));
                out.push_str(&format!(
                    "max-deviation log-log slope: {:.4}\n",
                    dev.loglog_slope
                ));
                out.push_str(&format!(
                    "path decomposition: {excursion_count} excursions, {trailing_discarded} trailing steps discarded\n"
                ));
                out
            }
            Payload::Coupling {
                model_id,
                x0,
                horizon,
                trials,
                per_step_bound_at_half_x0,
                survival,
            } => {
                let last = survival.last().map(|&(_, s)| s).unwrap_or(1.0);
                format!(
                    "model: {model_id}\nx0: {x0}, horizon: {horizon}, trials: {trials}\nper-step decoupling bound at x0/2: {per_step_bound_at_half_x0:.6}\nsurvival at horizon: {last:.6}\n"
                )
            }
            Payload::WeakLimit {
                model_id, report, ..
            } => {
                let mut out = format!(
                    "model: {model_id}\nalpha: {:.6}, theta: {:.6}\nmarginal KS: {:.6}\nmedian scaled X: {:.6}\n",
                    report.params.alpha,
                    report.params.theta,
                    report.marginal_ks,
                    report.median_scaled_x
                );
                for fit in &report.per_line {
                    out.push_str(&format!(
                        "line {}: count {}, joint KS {:.6}\n",
                        fit.line, fit.count, fit.ks
                    ));
                }
                out
            }
            Payload::HypothesisFailed { model_id, reason } => {
                format!("model: {model_id}\nhypothesis not met: {reason}\n")
            }
        }
    }

    /// The payload's primary CSV table, when it has one.
    fn csv_primary(&self) -> Option<String> {
        match self {
            Payload::Classify(_) | Payload::HypothesisFailed { .. } => None,
            Payload::Simulate {
                renewal_rate,
                occupation,
                ..
            } => {
                let mut out = String::from("quantity,x,mean,variance,count,ci95\n");
                out.push_str(&format!(
                    "renewal_rate,,{},{},{},{}\n",
                    renewal_rate.mean,
                    renewal_rate.variance,
                    renewal_rate.count,
                    renewal_rate.ci_halfwidth
                ));
                for (x, est) in occupation {
                    out.push_str(&format!(
                        "occupation,{x},{},{},{},{}\n",
                        est.mean, est.variance, est.count, est.ci_halfwidth
                    ));
                }
                Some(out)
            }
            Payload::ExcursionStats {
                lines,
                decomposition,
                ..
            } => Some(excursions_csv(lines, decomposition)),
            Payload::Coupling { survival, .. } => {
                let mut out = String::from("n,survival\n");
                for (n, s) in survival {
                    out.push_str(&format!("{n},{s}\n"));
                }
                Some(out)
            }
            Payload::WeakLimit { qq, .. } => {
                let mut out = String::from("p,empirical_quantile,theoretical_quantile\n");
                for (p, emp, theo) in qq {
                    out.push_str(&format!("{p},{emp},{theo}\n"));
                }
                Some(out)
            }
        }
    }

    /// Auxiliary CSV tables written alongside file reports.
    fn csv_aux(&self) -> Vec<(&'static str, String)> {
        match self {
            Payload::ExcursionStats {
                lines,
                decomposition,
                tau,
                dev,
                ..
            } => {
                let mut survival = String::from("r,survival\n");
                for (r, s) in &tau.survival {
                    survival.push_str(&format!("{r},{s}\n"));
                }
                let mut devtail = String::from("d,tail\n");
                for (d, p) in &dev.tail {
                    devtail.push_str(&format!("{d},{p}\n"));
                }
                vec![
                    ("excursions", excursions_csv(lines, decomposition)),
                    ("survival", survival),
                    ("maxdev", devtail),
                ]
            }
            Payload::Coupling { survival, .. } => {
                let mut out = String::from("n,survival\n");
                for (n, s) in survival {
                    out.push_str(&format!("{n},{s}\n"));
                }
                vec![("survival", out)]
            }
            Payload::WeakLimit { qq, .. } => {
                let mut out = String::from("p,empirical_quantile,theoretical_quantile\n");
                for (p, emp, theo) in qq {
                    out.push_str(&format!("{p},{emp},{theo}\n"));
                }
                vec![("qq", out)]
            }
            _ => Vec::new(),
        }
    }
}

fn excursions_csv(lines: &LineSet, decomposition: &Decomposition) -> String {
    let mut header = String::from("start_x,end_x,duration,max_dev");
    for label in lines.labels() {
        header.push_str(&format!(",occ_{label}"));
    }
    header.push('\n');
    let mut out = header;
    for e in &decomposition.excursions {
        out.push_str(&format!(
            "{},{},{},{}",
            e.start_x, e.end_x, e.duration, e.max_dev
        ));
        for c in &e.occupation {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct Envelope<'a> {
    command: &'a str,
    config_hash: String,
    seed: u64,
    version: &'static str,
    report: &'a Payload,
}

pub struct ReportWriter {
    config_hash: String,
    seed: u64,
    format: FormatKind,
    out_dir: Option<PathBuf>,
}

impl ReportWriter {
    pub fn new(config_text: &str, seed: u64, format: FormatKind, out_dir: Option<PathBuf>) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(config_text.as_bytes());
        let config_hash = format!("{:x}", hasher.finalize());
        Self {
            config_hash,
            seed,
            format,
            out_dir,
        }
    }

    fn header(&self, command: &str) -> String {
        format!(
            "# command: {command}\n# config: {}\n# seed: {}\n# version: {}\n",
            &self.config_hash[..16],
            self.seed,
            env!("CARGO_PKG_VERSION"),
        )
    }

    pub fn emit(&self, command: &str, payload: Payload) -> Result<(), String> {
        let envelope = Envelope {
            command,
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION"),
            report: &payload,
        };
        let body = match self.format {
            FormatKind::Json => {
                serde_json::to_string_pretty(&envelope).map_err(|e| e.to_string())? + "\n"
            }
            FormatKind::Text => self.header(command) + &payload.text(),
            FormatKind::Csv => match payload.csv_primary() {
                Some(table) => self.header(command) + &table,
                None => self.header(command) + &payload.text(),
            },
        };
        match &self.out_dir {
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(body.as_bytes()).map_err(|e| e.to_string())?;
            }
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
                let ts = std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0);
                let stem = format!("{command}-{}-{ts}", &self.config_hash[..8]);
                let ext = match self.format {
                    FormatKind::Json => "json",
                    FormatKind::Text => "txt",
                    FormatKind::Csv => "csv",
                };
                let path = dir.join(format!("{stem}.{ext}"));
                std::fs::write(&path, &body).map_err(|e| e.to_string())?;
                for (name, table) in payload.csv_aux() {
                    let aux = dir.join(format!("{stem}-{name}.csv"));
                    std::fs::write(&aux, table).map_err(|e| e.to_string())?;
                }
                println!("wrote {}", path.display());
            }
        }
        Ok(())
    }
}
