//! Records CSV, outcome text and binary field snapshots.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::ScenarioError;
use crate::bundle::{HermitianField, MatrixField};
use crate::continuation::PathOutcome;
use crate::diagnostics::{CheckReport, DiagnosticsRecord};
use crate::system::MetricState;
use crate::torus::ScalarField;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn records_csv(records: &[DiagnosticsRecord]) -> String {
    let mut s = DiagnosticsRecord::COLUMNS.join(",");
    s.push('\n');
    for r in records {
        let row = [
            format_f64(r.t),
            r.newton_iters.to_string(),
            format_f64(r.residual_norm),
            format_f64(r.sup_f),
            format_f64(r.inf_f),
            format_f64(r.osc_f),
            format_f64(r.sup_lambda_max),
            format_f64(r.osc_lambda_max),
            format_f64(r.sup_ef_lambda_max),
            format_f64(r.mean_ef_lambda_max),
            format_f64(r.sup_abs_laplacian_f),
            format_f64(r.min_eig_m),
            format_f64(r.deg_e),
            format_f64(r.l1_slack),
            r.l1_pass.to_string(),
            format_f64(r.subharmonic_slack),
            r.subharmonic_pass.to_string(),
            format_f64(r.deltanorm_violation),
            r.deltanorm_pass.to_string(),
        ];
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Structured `key = value` description of the outcome and the estimate checks.
pub fn outcome_text(outcome: &PathOutcome, checks: Option<&CheckReport>, params_line: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "outcome = {}", outcome.name());
    let _ = writeln!(s, "{params_line}");
    match outcome {
        PathOutcome::Success(st) => {
            let _ = writeln!(s, "final_inf_f = {}", format_f64(st.f.min()));
            let _ = writeln!(s, "final_sup_f = {}", format_f64(st.f.max()));
        }
        PathOutcome::Destabilized(rep) => {
            let _ = writeln!(s, "t = {}", format_f64(rep.t));
            let _ = writeln!(s, "m_t = {}", format_f64(rep.m_t));
            let _ = writeln!(s, "eps_cut = {}", format_f64(rep.eps_cut));
            let _ = writeln!(s, "resolved_fraction = {}", format_f64(rep.resolved_fraction));
            let _ = writeln!(s, "rank_pi = {}", rep.rank_pi);
            let _ = writeln!(s, "degQ_estimate = {}", format_f64(rep.degq_estimate));
            let _ = writeln!(s, "second_fundamental_norm = {}", format_f64(rep.second_fundamental_norm));
            let _ = writeln!(s, "g_tilde_range = {}, {}", format_f64(rep.g_tilde_range.0), format_f64(rep.g_tilde_range.1));
            let join = |v: &[f64]| v.iter().map(|x| format_f64(*x)).collect::<Vec<_>>().join(", ");
            let _ = writeln!(s, "sigma_schedule = {}", join(&rep.sigma_schedule));
            let _ = writeln!(s, "sigma_deltas = {}", join(&rep.sigma_deltas));
            let _ = writeln!(
                s,
                "log_spectrum_histogram = [{}, {}] {}",
                format_f64(rep.histogram.lo),
                format_f64(rep.histogram.hi),
                rep.histogram.counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
            );
        }
        PathOutcome::Stalled { t_reached, best_norm } => {
            let _ = writeln!(s, "t_reached = {}", format_f64(*t_reached));
            let _ = writeln!(s, "best_norm = {}", format_f64(*best_norm));
        }
    }
    if let Some(rep) = checks {
        let k = &rep.constants;
        let _ = writeln!(s, "keyest_bound = {}", format_f64(k.keyest_bound));
        let _ = writeln!(s, "laplacian_f_bound = {}", format_f64(k.laplacian_f_bound));
        let _ = writeln!(s, "gposi_constant = {}", format_f64(k.gposi_constant));
        for c in &rep.checks {
            let status = match (c.applicable, c.passed) {
                (false, _) => "n/a",
                (true, true) => "pass",
                (true, false) => "FAIL",
            };
            let ts = c.offending_t.iter().map(|t| format_f64(*t)).collect::<Vec<_>>().join(" ");
            let _ = writeln!(
                s,
                "check.{} = {status} measured {} bound {}{}",
                c.name,
                format_f64(c.measured),
                format_f64(c.bound),
                if ts.is_empty() { String::new() } else { format!(" at t = {ts}") }
            );
        }
    }
    s
}

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"DMLY";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum SnapshotData {
    Scalar(Vec<f64>),
    /// Point-major row-major `r × r` blocks.
    Matrix(Vec<Complex64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub n: usize,
    pub r: usize,
    pub t: f64,
    pub fields: Vec<(String, SnapshotData)>,
}

impl FieldSnapshot {
    /// Snapshot of `(f, H)` at `t`.
    pub fn of_state(state: &MetricState, t: f64) -> Self {
        Self {
            n: state.n(),
            r: state.r(),
            t,
            fields: vec![
                ("f".into(), SnapshotData::Scalar(state.f.values().to_vec())),
                ("H".into(), SnapshotData::Matrix(state.h.data().to_vec())),
            ],
        }
    }

    pub fn get(&self, name: &str) -> Option<&SnapshotData> {
        self.fields.iter().find(|(k, _)| k == name).map(|(_, v)| v)
    }

    pub fn to_state(&self) -> Result<MetricState, ScenarioError> {
        let bad = || ScenarioError::Snapshot("snapshot lacks scalar `f` or matrix `H`".into());
        let (Some(SnapshotData::Scalar(f)), Some(SnapshotData::Matrix(h))) = (self.get("f"), self.get("H")) else {
            return Err(bad());
        };
        let f = ScalarField::new(self.n, f.clone())?;
        let r = self.r;
        let rr = r * r;
        let h = MatrixField::from_fn(self.n, r, |p| crate::bundle::linalg::CMat::from_row_slice(r, r, &h[p * rr..(p + 1) * rr]));
        Ok(MetricState::new(f, HermitianField::new(h, true)?)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(SNAPSHOT_MAGIC);
        b.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        b.extend_from_slice(&(self.n as u32).to_le_bytes());
        b.extend_from_slice(&(self.r as u32).to_le_bytes());
        b.extend_from_slice(&self.t.to_le_bytes());
        b.extend_from_slice(&(self.fields.len() as u32).to_le_bytes());
        for (name, data) in &self.fields {
            b.extend_from_slice(&(name.len() as u32).to_le_bytes());
            b.extend_from_slice(name.as_bytes());
            match data {
                SnapshotData::Scalar(v) => {
                    b.push(0);
                    b.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    v.iter().for_each(|x| b.extend_from_slice(&x.to_le_bytes()));
                }
                SnapshotData::Matrix(v) => {
                    b.push(1);
                    b.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    for z in v {
                        b.extend_from_slice(&z.re.to_le_bytes());
                        b.extend_from_slice(&z.im.to_le_bytes());
                    }
                }
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ScenarioError> {
        let mut cur = bytes;
        let mut take = |k: usize| -> Result<&[u8], ScenarioError> {
            if cur.len() < k {
                return Err(ScenarioError::Snapshot("truncated snapshot".into()));
            }
            let (head, tail) = cur.split_at(k);
            cur = tail;
            Ok(head)
        };
        if take(4)? != SNAPSHOT_MAGIC {
            return Err(ScenarioError::Snapshot("bad magic".into()));
        }
        let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().expect("4 bytes"));
        let f64_at = |s: &[u8]| f64::from_le_bytes(s.try_into().expect("8 bytes"));
        let version = u32_at(take(4)?);
        if version != SNAPSHOT_VERSION {
            return Err(ScenarioError::Snapshot(format!("unsupported version {version}")));
        }
        let n = u32_at(take(4)?) as usize;
        let r = u32_at(take(4)?) as usize;
        let t = f64_at(take(8)?);
        let count = u32_at(take(4)?) as usize;
        let mut fields = Vec::with_capacity(count);
        for _ in 0..count {
            let len = u32_at(take(4)?) as usize;
            let name = String::from_utf8(take(len)?.to_vec()).map_err(|_| ScenarioError::Snapshot("field name is not UTF-8".into()))?;
            let kind = take(1)?[0];
            let len = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
            let data = match kind {
                0 => SnapshotData::Scalar(take(8 * len)?.chunks_exact(8).map(f64_at).collect()),
                1 => SnapshotData::Matrix(
                    take(16 * len)?
                        .chunks_exact(16)
                        .map(|c| Complex64::new(f64_at(&c[..8]), f64_at(&c[8..])))
                        .collect(),
                ),
                k => return Err(ScenarioError::Snapshot(format!("unknown field kind {k}"))),
            };
            fields.push((name, data));
        }
        if !cur.is_empty() {
            return Err(ScenarioError::Snapshot("trailing bytes".into()));
        }
        Ok(Self { n, r, t, fields })
    }

    pub fn write(&self, path: &Path) -> Result<(), ScenarioError> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, ScenarioError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::random_traceless;
    use crate::torus::{random_band_limited, Grid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            assert_eq!(format_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let g = Grid::new(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_band_limited(&g, &mut rng, 2, 0.7);
        let h = random_traceless(&g, 3, 5, 2, 0.4);
        let st = MetricState::new(f, h).unwrap();
        let snap = FieldSnapshot::of_state(&st, 0.3);
        let bytes = snap.to_bytes();
        assert_eq!(&bytes[..4], b"DMLY");
        let back = FieldSnapshot::from_bytes(&bytes).unwrap();
        assert_eq!(back, snap);
        assert_eq!(back.to_state().unwrap(), st);
        assert!(FieldSnapshot::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.dmly");
        snap.write(&path).unwrap();
        assert_eq!(FieldSnapshot::read(&path).unwrap(), snap);
    }

    #[test]
    fn csv_header_and_rows() {
        let rec = DiagnosticsRecord {
            t: 0.5,
            newton_iters: 3,
            residual_norm: 1e-11,
            sup_f: 0.1,
            inf_f: -0.1,
            osc_f: 0.2,
            sup_lambda_max: 1.0,
            osc_lambda_max: 0.0,
            sup_ef_lambda_max: 1.0,
            mean_ef_lambda_max: 1.0,
            sup_abs_laplacian_f: 0.0,
            min_eig_m: 2.0,
            deg_e: 3.0,
            l1_slack: 0.5,
            l1_pass: true,
            subharmonic_slack: 1.0,
            subharmonic_pass: true,
            deltanorm_violation: -1.0,
            deltanorm_pass: true,
        };
        let csv = records_csv(&[rec.clone(), rec]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("t,newton_iters,residual_norm,sup_f"));
        assert_eq!(lines[1].split(',').count(), DiagnosticsRecord::COLUMNS.len());
    }
}
