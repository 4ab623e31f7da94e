//! Firm-level survey ingestion, outlier filtering, modern/traditional
//! classification, and bribery moment extraction.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Read;

/// One firm-level survey row. Monetary columns share a common, pre-deflated
/// unit. `workers` and `bribe_share` may be missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmRecord {
    pub survey_id: String,
    pub sales: f64,
    pub capital: f64,
    pub labor_cost: f64,
    pub intermediate_cost: f64,
    pub workers: Option<u32>,
    pub bribe_share: Option<f64>,
}

impl FirmRecord {
    fn validate(&self, row: usize) -> Result<()> {
        let monetary = [
            ("sales", self.sales),
            ("capital", self.capital),
            ("labor_cost", self.labor_cost),
            ("intermediate_cost", self.intermediate_cost),
        ];
        for (name, v) in monetary {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::BadRecord {
                    row,
                    column: name.to_string(),
                    reason: format!("must be finite and non-negative, got {v}"),
                });
            }
        }
        if let Some(b) = self.bribe_share {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::BadRecord {
                    row,
                    column: "bribe_share".to_string(),
                    reason: format!("must lie in [0,1], got {b}"),
                });
            }
        }
        if let Some(w) = self.workers {
            if w == 0 {
                return Err(Error::BadRecord {
                    row,
                    column: "workers".to_string(),
                    reason: "must be positive when present".to_string(),
                });
            }
        }
        Ok(())
    }
}

/// How the capital-labor ratio is formed from a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum KappaDefinition {
    /// capital / labor_cost (works on every record).
    #[default]
    CapitalOverLaborCost,
    /// capital / workers where worker counts exist, falling back to labor cost.
    CapitalOverWorkers,
}

pub fn kappa(record: &FirmRecord, def: KappaDefinition) -> Option<f64> {
    let denom = match def {
        KappaDefinition::CapitalOverLaborCost => record.labor_cost,
        KappaDefinition::CapitalOverWorkers => match record.workers {
            Some(w) => w as f64,
            None => record.labor_cost,
        },
    };
    if denom > 0.0 {
        Some(record.capital / denom)
    } else {
        None
    }
}

/// Result of loading one survey file: accepted rows plus per-row rejection
/// diagnostics (nothing is dropped silently).
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub records: Vec<FirmRecord>,
    pub rejected: Vec<String>,
}

const EXPECTED_HEADER: [&str; 7] = [
    "survey_id",
    "sales",
    "capital",
    "labor_cost",
    "intermediate_cost",
    "workers",
    "bribe_share",
];

/// Reads the firm CSV schema
/// `survey_id,sales,capital,labor_cost,intermediate_cost,workers,bribe_share`.
/// Malformed rows are rejected with a diagnostic naming the row and column.
pub fn load_firm_records<R: Read>(source: R) -> Result<LoadReport> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source);
    let header = reader.headers()?.clone();
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != EXPECTED_HEADER {
        return Err(Error::Input(format!(
            "header mismatch: expected {:?}, got {:?}",
            EXPECTED_HEADER, got
        )));
    }
    let mut report = LoadReport::default();
    for (idx, row) in reader.records().enumerate() {
        let row_no = idx + 2; // 1-based, after the header line
        let row = row?;
        match parse_row(&row, row_no) {
            Ok(rec) => report.records.push(rec),
            Err(e) => report.rejected.push(e.to_string()),
        }
    }
    Ok(report)
}

fn parse_row(row: &csv::StringRecord, row_no: usize) -> Result<FirmRecord> {
    let field = |i: usize| row.get(i).unwrap_or("").trim();
    let num = |i: usize, name: &str| -> Result<f64> {
        field(i).parse::<f64>().map_err(|_| Error::BadRecord {
            row: row_no,
            column: name.to_string(),
            reason: format!("not a number: {:?}", field(i)),
        })
    };
    let opt_num = |i: usize, name: &str| -> Result<Option<f64>> {
        if field(i).is_empty() {
            Ok(None)
        } else {
            num(i, name).map(Some)
        }
    };
    let workers = if field(5).is_empty() {
        None
    } else {
        Some(field(5).parse::<u32>().map_err(|_| Error::BadRecord {
            row: row_no,
            column: "workers".to_string(),
            reason: format!("not a count: {:?}", field(5)),
        })?)
    };
    let rec = FirmRecord {
        survey_id: field(0).to_string(),
        sales: num(1, "sales")?,
        capital: num(2, "capital")?,
        labor_cost: num(3, "labor_cost")?,
        intermediate_cost: num(4, "intermediate_cost")?,
        workers,
        bribe_share: opt_num(6, "bribe_share")?,
    };
    rec.validate(row_no)?;
    Ok(rec)
}

/// Single-pass k-standard-deviation filter over sales, capital, labor cost,
/// and intermediate cost jointly (union of per-field flags).
pub fn filter_outliers(records: &[FirmRecord], k: f64) -> Result<Vec<FirmRecord>> {
    if records.len() < 2 {
        return Err(Error::Input(
            "outlier filter needs at least 2 records (variance undefined)".to_string(),
        ));
    }
    if !(k > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "standard-deviation multiplier must be positive, got {k}"
        )));
    }
    let fields: [fn(&FirmRecord) -> f64; 4] = [
        |r| r.sales,
        |r| r.capital,
        |r| r.labor_cost,
        |r| r.intermediate_cost,
    ];
    let n = records.len() as f64;
    let stats: Vec<(f64, f64)> = fields
        .iter()
        .map(|f| {
            let mean = records.iter().map(f).sum::<f64>() / n;
            let var = records.iter().map(|r| (f(r) - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, var.sqrt())
        })
        .collect();
    Ok(records
        .iter()
        .filter(|r| {
            fields
                .iter()
                .zip(&stats)
                .all(|(f, &(mean, sd))| (f(r) - mean).abs() <= k * sd)
        })
        .cloned()
        .collect())
}

/// Exact 1-D two-cluster split: scans all n-1 split points of the sorted
/// ratios and returns the midpoint of the boundary pair minimizing the
/// within-group sum of squares. No Lloyd iteration is needed in 1-D.
pub fn kmeans_threshold(ratios: &[f64]) -> Result<f64> {
    if ratios.len() < 2 {
        return Err(Error::Input("need at least 2 ratios".to_string()));
    }
    let mut sorted = ratios.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite ratio"));
    if sorted.first() == sorted.last() {
        return Err(Error::NoSplit);
    }
    let n = sorted.len();
    let mut prefix = vec![0.0; n + 1];
    let mut prefix_sq = vec![0.0; n + 1];
    for (i, &x) in sorted.iter().enumerate() {
        prefix[i + 1] = prefix[i] + x;
        prefix_sq[i + 1] = prefix_sq[i] + x * x;
    }
    let wgss = |lo: usize, hi: usize| -> f64 {
        // sum of squared deviations over sorted[lo..hi]
        let cnt = (hi - lo) as f64;
        let sum = prefix[hi] - prefix[lo];
        (prefix_sq[hi] - prefix_sq[lo]) - sum * sum / cnt
    };
    let mut best = f64::INFINITY;
    let mut best_split = 1;
    for split in 1..n {
        if sorted[split - 1] == sorted[split] {
            continue; // identical boundary values cannot be separated
        }
        let total = wgss(0, split) + wgss(split, n);
        if total < best {
            best = total;
            best_split = split;
        }
    }
    Ok(0.5 * (sorted[best_split - 1] + sorted[best_split]))
}

/// Panel of records with modern/traditional labels and the split threshold.
#[derive(Debug, Clone)]
pub struct ClassifiedPanel {
    pub records: Vec<(FirmRecord, u8)>,
    pub threshold: f64,
    pub rejected: Vec<String>,
}

impl ClassifiedPanel {
    pub fn modern_share(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|(_, j)| *j == 1).count() as f64 / self.records.len() as f64
    }
}

/// Labels each record: modern (1) when kappa exceeds the threshold,
/// traditional (0) otherwise. Ties go to traditional.
pub fn classify(
    records: &[FirmRecord],
    threshold: f64,
    def: KappaDefinition,
) -> ClassifiedPanel {
    let mut labeled = Vec::with_capacity(records.len());
    let mut rejected = Vec::new();
    for (i, r) in records.iter().enumerate() {
        match kappa(r, def) {
            Some(kap) => labeled.push((r.clone(), u8::from(kap > threshold))),
            None => rejected.push(format!(
                "record {i} ({}): capital-labor ratio undefined (zero denominator)",
                r.survey_id
            )),
        }
    }
    ClassifiedPanel {
        records: labeled,
        threshold,
        rejected,
    }
}

/// Per-technology Bernoulli bribe law: incidence `p_j` and conditional size
/// `tau_j` as a share of sales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BriberyRegime {
    pub p0: f64,
    pub tau0: f64,
    pub p1: f64,
    pub tau1: f64,
}

impl BriberyRegime {
    pub fn new(p0: f64, tau0: f64, p1: f64, tau1: f64) -> Result<Self> {
        for (name, v) in [("p0", p0), ("tau0", tau0), ("p1", p1), ("tau1", tau1)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in [0,1], got {v}"
                )));
            }
        }
        Ok(Self { p0, tau0, p1, tau1 })
    }

    pub fn none() -> Self {
        Self {
            p0: 0.0,
            tau0: 0.0,
            p1: 0.0,
            tau1: 0.0,
        }
    }

    pub fn probability(&self, tech: usize) -> f64 {
        if tech == 0 {
            self.p0
        } else {
            self.p1
        }
    }

    pub fn size(&self, tech: usize) -> f64 {
        if tech == 0 {
            self.tau0
        } else {
            self.tau1
        }
    }
}

/// How the conditional bribe size is averaged over bribe-paying firms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BribeWeighting {
    #[default]
    SalesWeighted,
    Unweighted,
}

/// Extracts per-technology bribery moments from a classified panel.
///
/// `p_j` is the fraction of label-j firms with a reported positive bribe
/// among those reporting at all; `tau_j` averages positive bribe shares
/// (sales-weighted by default). Labels with no positive bribes yield
/// (p=0, tau=0).
pub fn bribery_moments(panel: &ClassifiedPanel, weighting: BribeWeighting) -> BriberyRegime {
    let mut out = [(0.0f64, 0.0f64); 2];
    for tech in 0..2u8 {
        let reporting: Vec<&FirmRecord> = panel
            .records
            .iter()
            .filter(|(r, j)| *j == tech && r.bribe_share.is_some())
            .map(|(r, _)| r)
            .collect();
        if reporting.is_empty() {
            continue;
        }
        let positive: Vec<&&FirmRecord> = reporting
            .iter()
            .filter(|r| r.bribe_share.unwrap_or(0.0) > 0.0)
            .collect();
        let p = positive.len() as f64 / reporting.len() as f64;
        let tau = if positive.is_empty() {
            0.0
        } else {
            match weighting {
                BribeWeighting::SalesWeighted => {
                    let wsum: f64 = positive.iter().map(|r| r.sales).sum();
                    if wsum > 0.0 {
                        positive
                            .iter()
                            .map(|r| r.sales * r.bribe_share.unwrap())
                            .sum::<f64>()
                            / wsum
                    } else {
                        positive.iter().map(|r| r.bribe_share.unwrap()).sum::<f64>()
                            / positive.len() as f64
                    }
                }
                BribeWeighting::Unweighted => {
                    positive.iter().map(|r| r.bribe_share.unwrap()).sum::<f64>()
                        / positive.len() as f64
                }
            }
        };
        out[tech as usize] = (p, tau);
    }
    BriberyRegime {
        p0: out[0].0,
        tau0: out[0].1,
        p1: out[1].0,
        tau1: out[1].1,
    }
}

/// Minimum firms per survey; smaller surveys are skipped at ingest.
pub const MIN_SURVEY_FIRMS: usize = 10;
