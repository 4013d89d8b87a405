//! `tower.json`: a checksummed summary of a tower trace together with the config that
//! produced it. Weights are not stored; a digest of the finest blocks is, and a trace is
//! verified by rebuilding it from the embedded config.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, RunConfig};
use crate::engine::GammaTable;
use crate::error::{Error, Result};
use crate::scalar::{Mode, Scalar};
use crate::tower::{StageCertificate, StageSummary, TowerTrace};

pub const FORMAT: &str = "cutstack-tower/1";

/// Values of dyadic representations are listed only up to this size.
const MAX_LISTED_VALUES: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSummary {
    pub depths: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<Vec<String>>,
    pub costs: Vec<f64>,
    pub tail_proxies: Vec<f64>,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestStage {
    pub summary: StageSummary,
    pub certificate: StageCertificate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaManifest {
    pub anchors: Vec<(u64, String)>,
    pub eps: Vec<(u64, f64)>,
    pub step_bound: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TowerManifest {
    pub format: String,
    pub config_hash: String,
    pub mode: Mode,
    pub config: RunConfig,
    pub complete: bool,
    pub incomplete: Option<String>,
    pub h0: u64,
    pub top: u64,
    pub blocks: usize,
    pub scale: String,
    pub schedule: Vec<String>,
    pub floor_r: String,
    pub bicycle_m: String,
    pub split: Option<SplitSummary>,
    pub stages: Vec<ManifestStage>,
    pub gamma: GammaManifest,
    /// sha256 over the finest blocks (period, length, unit, weights).
    pub finest_digest: String,
    /// sha256 of the compact JSON with this field empty.
    pub checksum: String,
}

pub fn finest_digest<W: Scalar>(trace: &TowerTrace<W>) -> String {
    let mut h = Sha256::new();
    for b in trace.array.blocks() {
        h.update(format!("{}:{}:{}|", b.period(), b.len(), b.unit().render()).as_bytes());
        for x in &b.fast()[..b.period()] {
            h.update(format!("{x:?},").as_bytes());
        }
    }
    hex(&h.finalize())
}

impl TowerManifest {
    pub fn from_trace<W: Scalar>(trace: &TowerTrace<W>, config: &RunConfig) -> Self {
        let split = trace.split.as_ref().map(|s| SplitSummary {
            depths: s.reps.iter().map(|r| r.depth).collect(),
            values: if s.reps.iter().all(|r| r.rep.size() <= MAX_LISTED_VALUES) {
                s.reps.iter().map(|r| r.rep.values().iter().map(|v| v.render()).collect()).collect()
            } else {
                Vec::new()
            },
            costs: s.costs.clone(),
            tail_proxies: s.tail_proxies.clone(),
            truncated: s.truncated,
        });
        let mut m = TowerManifest {
            format: FORMAT.into(),
            config_hash: config.hash(),
            mode: W::MODE,
            config: config.clone(),
            complete: trace.complete,
            incomplete: trace.incomplete.clone(),
            h0: trace.h0(),
            top: trace.top(),
            blocks: trace.array.size(),
            scale: trace.array.scale().render(),
            schedule: trace.schedule.iter().map(|d| d.render()).collect(),
            floor_r: trace.floor_r.render(),
            bicycle_m: trace.bicycle_m.to_string(),
            split,
            stages: trace
                .stages
                .iter()
                .map(|s| ManifestStage { summary: s.summary.clone(), certificate: s.cert.clone() })
                .collect(),
            gamma: GammaManifest {
                anchors: trace.gamma.anchors().iter().map(|(k, g)| (*k, g.render())).collect(),
                eps: trace.gamma.eps_anchors().to_vec(),
                step_bound: trace.gamma.step_bound().render(),
            },
            finest_digest: finest_digest(trace),
            checksum: String::new(),
        };
        m.checksum = m.compute_checksum();
        m
    }

    fn compute_checksum(&self) -> String {
        let mut c = self.clone();
        c.checksum.clear();
        let s = serde_json::to_string(&c).expect("manifest serializes");
        hex(&Sha256::digest(s.as_bytes()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// Parses and checks format, checksum and the γ table; every failure is a corrupt trace.
    pub fn from_json(s: &str) -> Result<Self> {
        let m: TowerManifest =
            serde_json::from_str(s).map_err(|e| Error::CorruptTrace(format!("unreadable trace: {e}")))?;
        if m.format != FORMAT {
            return Err(Error::CorruptTrace(format!("unknown format {:?}", m.format)));
        }
        if m.checksum != m.compute_checksum() {
            return Err(Error::CorruptTrace("checksum mismatch".into()));
        }
        if m.config.hash() != m.config_hash {
            return Err(Error::CorruptTrace("config hash mismatch".into()));
        }
        match m.mode {
            Mode::Exact => m.gamma_table::<crate::Rational>().map(|_| ()),
            Mode::Float => m.gamma_table::<f64>().map(|_| ()),
        }
        .map_err(|e| Error::CorruptTrace(format!("γ table: {e}")))?;
        Ok(m)
    }

    pub fn gamma_table<W: Scalar>(&self) -> Result<GammaTable<W>> {
        let anchors = self.gamma.anchors.iter().map(|(k, g)| Ok((*k, W::parse_str(g)?))).collect::<Result<Vec<_>>>()?;
        GammaTable::new(anchors, self.gamma.eps.clone(), W::parse_str(&self.gamma.step_bound)?)
    }

    /// Fails with the first differing top-level field.
    pub fn ensure_matches(&self, rebuilt: &TowerManifest) -> Result<()> {
        let a = serde_json::to_value(self).expect("manifest serializes");
        let b = serde_json::to_value(rebuilt).expect("manifest serializes");
        if a == b {
            return Ok(());
        }
        let (serde_json::Value::Object(a), serde_json::Value::Object(b)) = (a, b) else {
            unreachable!("manifests are objects")
        };
        let field = a.iter().find(|(k, v)| b.get(*k) != Some(*v)).map(|(k, _)| k.clone()).unwrap_or_default();
        Err(Error::CorruptTrace(format!("trace does not match its rebuild (field {field:?})")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tower::build_tower;
    use crate::Rational;

    fn example() -> (RunConfig, TowerManifest) {
        let mut c = RunConfig::preset("example1").unwrap();
        c.tower.pipeline = crate::tower::Pipeline::Example1 { stages: 2 };
        let t = build_tower::<Rational>(&c.target_dist().unwrap(), &c.tower_params().unwrap()).unwrap();
        let m = TowerManifest::from_trace(&t, &c);
        (c, m)
    }

    #[test]
    fn round_trip_and_tamper() {
        let (c, m) = example();
        let s = m.to_json();
        let back = TowerManifest::from_json(&s).unwrap();
        assert_eq!(back, m);
        back.ensure_matches(&m).unwrap();
        let t = build_tower::<Rational>(&c.target_dist().unwrap(), &c.tower_params().unwrap()).unwrap();
        assert_eq!(TowerManifest::from_trace(&t, &c).to_json(), s);

        let mut g = m.clone();
        g.gamma.eps[0].1 += 0.5;
        let tampered = g.to_json();
        assert!(matches!(TowerManifest::from_json(&tampered), Err(Error::CorruptTrace(_))));
        g.checksum = g.compute_checksum();
        let resealed = TowerManifest::from_json(&g.to_json()).unwrap();
        assert!(matches!(resealed.ensure_matches(&m), Err(Error::CorruptTrace(_))));
        assert!(matches!(TowerManifest::from_json("{"), Err(Error::CorruptTrace(_))));
    }
}
