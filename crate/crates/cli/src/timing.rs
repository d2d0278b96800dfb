//! Measured stage costs and the extrapolated comparison between running a
//! fault-injection campaign on every design and predicting with trained models.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Wall-clock seconds recorded by the pipeline stages.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    #[serde(default)]
    pub campaign: Option<CampaignTiming>,
    /// Training seconds per label.
    #[serde(default)]
    pub train: BTreeMap<String, f64>,
    #[serde(default)]
    pub predict: Option<PredictTiming>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CampaignTiming {
    pub designs: usize,
    pub sbf_seconds: f64,
    pub dbf_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictTiming {
    /// Single-model predictions, each on one design.
    pub calls: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub designs: u64,
    pub fi_seconds: f64,
    pub method_seconds: f64,
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    /// SBF campaign plus DBF derivation, per design.
    pub fi_per_design: f64,
    pub sbf_per_design: f64,
    pub dbf_per_design: f64,
    /// Labelling campaigns on the training designs plus model training.
    pub train_total: f64,
    pub training_designs: usize,
    pub labels: Vec<String>,
    /// One prediction per label, per design.
    pub predict_per_design: f64,
    pub rows: Vec<SpeedupRow>,
    /// Smallest design count at which predicting is cheaper than injecting,
    /// if prediction is cheaper per design at all.
    pub break_even: Option<f64>,
}

pub const TABLE_SIZES: [u64; 5] = [100, 1_000, 10_000, 100_000, 1_000_000];

impl TimingReport {
    pub fn build(
        campaign: &CampaignTiming,
        train: &BTreeMap<String, f64>,
        predict_per_call: f64,
    ) -> TimingReport {
        let n = campaign.designs.max(1) as f64;
        let sbf = campaign.sbf_seconds / n;
        let dbf = campaign.dbf_seconds / n;
        let fi = sbf + dbf;
        let train_total = campaign.sbf_seconds + campaign.dbf_seconds + train.values().sum::<f64>();
        let predict = predict_per_call * train.len() as f64;
        let rows = TABLE_SIZES
            .iter()
            .map(|&d| {
                let fi_seconds = d as f64 * fi;
                let method_seconds = train_total + d as f64 * predict;
                SpeedupRow {
                    designs: d,
                    fi_seconds,
                    method_seconds,
                    speedup: fi_seconds / method_seconds,
                }
            })
            .collect();
        TimingReport {
            fi_per_design: fi,
            sbf_per_design: sbf,
            dbf_per_design: dbf,
            train_total,
            training_designs: campaign.designs,
            labels: train.keys().cloned().collect(),
            predict_per_design: predict,
            rows,
            break_even: (fi > predict).then(|| train_total / (fi - predict)),
        }
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        s.push_str("| designs | FI campaigns (s) | training + prediction (s) | speedup |\n");
        s.push_str("|---:|---:|---:|---:|\n");
        for r in &self.rows {
            s.push_str(&format!(
                "| {} | {:.3e} | {:.3e} | {:.2}x |\n",
                r.designs, r.fi_seconds, r.method_seconds, r.speedup
            ));
        }
        s.push('\n');
        s.push_str(&format!(
            "FI per design {:.3e} s (SBF {:.3e} s, DBF {:.3e} s); prediction per design {:.3e} s for {} label(s); \
             training {:.3e} s over {} designs.\n",
            self.fi_per_design,
            self.sbf_per_design,
            self.dbf_per_design,
            self.predict_per_design,
            self.labels.len(),
            self.train_total,
            self.training_designs
        ));
        match self.break_even {
            Some(n) => s.push_str(&format!("Break-even at {:.0} designs.\n", n.ceil())),
            None => s.push_str("No break-even: prediction is not cheaper than injection per design.\n"),
        }
        s
    }
}
