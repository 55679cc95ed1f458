use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::deep_ac::EpisodeRecord;
use crate::error::{Error, Result};
use crate::linear_ac::LinearRecord;

/// One evaluation point of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub seed: u64,
    /// Training step (linear) or episode (deep).
    pub step: u64,
    /// Exact `J`, or the Monte Carlo mean over evaluation episodes.
    pub ret: f64,
    pub ret_std: Option<f64>,
    pub omega_disagreement: Option<f64>,
    pub theta_disagreement: Option<f64>,
    /// Messages sent so far.
    pub obs_msgs: u64,
    pub param_msgs: u64,
    pub open_by_rank: Vec<f64>,
    pub p_communicate: Option<f64>,
}

impl From<&LinearRecord> for MetricsRecord {
    fn from(r: &LinearRecord) -> Self {
        Self {
            seed: r.seed,
            step: r.step,
            ret: r.j,
            ret_std: None,
            omega_disagreement: Some(r.omega_disagreement),
            theta_disagreement: Some(r.theta_disagreement),
            obs_msgs: 0,
            param_msgs: 0,
            open_by_rank: Vec::new(),
            p_communicate: None,
        }
    }
}

/// Rows for the evaluation points of a deep run, with cumulative message
/// counts.
pub fn deep_metrics(records: &[EpisodeRecord]) -> Vec<MetricsRecord> {
    let (mut obs, mut param) = (0, 0);
    let mut out = Vec::new();
    for r in records {
        obs += r.obs_msgs;
        param += r.param_msgs;
        if let Some(e) = &r.eval {
            out.push(MetricsRecord {
                seed: r.seed,
                step: r.episode as u64 + 1,
                ret: e.mean,
                ret_std: Some(e.std),
                omega_disagreement: None,
                theta_disagreement: None,
                obs_msgs: obs,
                param_msgs: param,
                open_by_rank: e.open_by_rank.clone(),
                p_communicate: r.p_communicate,
            });
        }
    }
    out
}

/// Append-only metric rows; steps increase within each seed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    /// Number of gate-rank columns.
    pub ranks: usize,
    rows: Vec<MetricsRecord>,
}

impl MetricsLog {
    pub fn new(ranks: usize) -> Self {
        Self {
            ranks,
            rows: Vec::new(),
        }
    }

    pub fn rows(&self) -> &[MetricsRecord] {
        &self.rows
    }

    pub fn push(&mut self, r: MetricsRecord) -> Result<()> {
        if !r.open_by_rank.is_empty() && r.open_by_rank.len() != self.ranks {
            return Err(Error::Dimension(format!(
                "{} gate ranks in a log with {}",
                r.open_by_rank.len(),
                self.ranks
            )));
        }
        if let Some(prev) = self.rows.iter().rev().find(|p| p.seed == r.seed) {
            if r.step <= prev.step {
                return Err(Error::InvalidParam(format!(
                    "seed {} step {} does not follow step {}",
                    r.seed, r.step, prev.step
                )));
            }
        }
        self.rows.push(r);
        Ok(())
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = MetricsRecord>) -> Result<()> {
        rows.into_iter().try_for_each(|r| self.push(r))
    }

    /// The last row of every seed, by seed.
    pub fn finals(&self) -> BTreeMap<u64, &MetricsRecord> {
        let mut out = BTreeMap::new();
        for r in &self.rows {
            out.insert(r.seed, r);
        }
        out
    }
}

const FIXED_COLUMNS: [&str; 8] = [
    "seed",
    "step",
    "return",
    "return_std",
    "omega_disagreement",
    "theta_disagreement",
    "obs_msgs",
    "param_msgs",
];

fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes `seed,step,return,return_std,omega_disagreement,
/// theta_disagreement,obs_msgs,param_msgs,gate_open_r0..,p_communicate`.
/// Missing values are empty cells.
pub fn emit_csv<W: Write>(out: W, log: &MetricsLog) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((0..log.ranks).map(|r| format!("gate_open_r{r}")));
    header.push("p_communicate".into());
    w.write_record(&header)?;
    for r in &log.rows {
        let mut row = vec![
            r.seed.to_string(),
            r.step.to_string(),
            r.ret.to_string(),
            cell(r.ret_std),
            cell(r.omega_disagreement),
            cell(r.theta_disagreement),
            r.obs_msgs.to_string(),
            r.param_msgs.to_string(),
        ];
        row.extend((0..log.ranks).map(|k| cell(r.open_by_rank.get(k).copied())));
        row.push(cell(r.p_communicate));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`emit_csv`].
pub fn read_csv<R: Read>(input: R) -> Result<MetricsLog> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("metrics file lacks column '{name}'")))
    };
    let fixed: Vec<usize> = FIXED_COLUMNS.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let p_comm = col("p_communicate")?;
    let ranks: Vec<usize> = (0..)
        .map_while(|r| header.iter().position(|h| h == format!("gate_open_r{r}")))
        .collect();
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("'{s}': {e}")));
    let int = |s: &str| s.parse::<u64>().map_err(|e| Error::Parse(format!("'{s}': {e}")));
    let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
    let mut log = MetricsLog::new(ranks.len());
    for rec in rd.records() {
        let rec = rec?;
        let f = |k: usize| &rec[fixed[k]];
        let open: Vec<Option<f64>> = ranks.iter().map(|&c| opt(&rec[c])).collect::<Result<_>>()?;
        log.push(MetricsRecord {
            seed: int(f(0))?,
            step: int(f(1))?,
            ret: num(f(2))?,
            ret_std: opt(f(3))?,
            omega_disagreement: opt(f(4))?,
            theta_disagreement: opt(f(5))?,
            obs_msgs: int(f(6))?,
            param_msgs: int(f(7))?,
            open_by_rank: open.into_iter().collect::<Option<Vec<_>>>().unwrap_or_default(),
            p_communicate: opt(&rec[p_comm])?,
        })?;
    }
    Ok(log)
}
