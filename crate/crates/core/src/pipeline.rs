//! Pipeline orchestration: configuration, survey ingestion, estimation,
//! calibration, counterfactual tables, and the reproducibility manifest.
//! All outputs are deterministic: identical config yields identical bytes.

use crate::calibration::{
    calibrate_country, group_by_income, CountryTargets, IncomeGroup, MomentLoss, SharedParams,
};
use crate::counterfactual::{income_group_table, run_counterfactual, table_to_csv, Scenario};
use crate::dist::QuadratureRule;
use crate::equilibrium::{residuals, stationary_equilibrium, EconomyParams};
use crate::error::{Error, Result};
use crate::estimation::{estimate_labor_elasticity, mean_profit_share, recover_sigma_alpha};
use crate::firmdata::{
    bribery_moments, classify, filter_outliers, kappa, kmeans_threshold, load_firm_records,
    BribeWeighting, BriberyRegime, ClassifiedPanel, KappaDefinition, MIN_SURVEY_FIRMS,
};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

/// Full run configuration. Defaults are the benchmark parameter values;
/// a flat key=value file and command-line flags override them.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input_dir: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    pub params_file: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub beta: f64,
    pub delta: f64,
    pub lambda: f64,
    pub theta: f64,
    pub sigma0: f64,
    pub alpha0: f64,
    pub sigma1: f64,
    pub alpha1: f64,
    pub quad_nodes: usize,
    pub outlier_multiplier: f64,
    pub kappa_definition: KappaDefinition,
    pub bribe_weighting: BribeWeighting,
    pub moment_loss: MomentLoss,
    pub scenarios: Vec<Scenario>,
    /// Calibration acceptance tolerance (max relative moment error).
    pub tol: f64,
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input_dir: None,
            targets: None,
            params_file: None,
            out_dir: PathBuf::from("out"),
            beta: 0.96,
            delta: 0.08,
            lambda: 0.10,
            theta: 4.5,
            sigma0: 0.378,
            alpha0: 0.230,
            sigma1: 0.334,
            alpha1: 0.538,
            quad_nodes: 200,
            outlier_multiplier: 3.0,
            kappa_definition: KappaDefinition::CapitalOverLaborCost,
            bribe_weighting: BribeWeighting::SalesWeighted,
            moment_loss: MomentLoss::Chebyshev,
            scenarios: vec![Scenario::NoBribery],
            tol: 1e-6,
            jobs: None,
        }
    }
}

impl RunConfig {
    /// Applies one key=value setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Input(format!("bad value {value:?} for config key {what}"));
        let num = |v: &str, key: &str| v.parse::<f64>().map_err(|_| bad(key));
        match key {
            "input_dir" => self.input_dir = Some(PathBuf::from(value)),
            "targets" => self.targets = Some(PathBuf::from(value)),
            "params_file" => self.params_file = Some(PathBuf::from(value)),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "beta" => self.beta = num(value, key)?,
            "delta" => self.delta = num(value, key)?,
            "lambda" => self.lambda = num(value, key)?,
            "theta" => self.theta = num(value, key)?,
            "sigma0" => self.sigma0 = num(value, key)?,
            "alpha0" => self.alpha0 = num(value, key)?,
            "sigma1" => self.sigma1 = num(value, key)?,
            "alpha1" => self.alpha1 = num(value, key)?,
            "quad_nodes" => self.quad_nodes = value.parse().map_err(|_| bad(key))?,
            "outlier_multiplier" => self.outlier_multiplier = num(value, key)?,
            "kappa_definition" => {
                self.kappa_definition = match value {
                    "labor_cost" => KappaDefinition::CapitalOverLaborCost,
                    "workers" => KappaDefinition::CapitalOverWorkers,
                    _ => return Err(bad(key)),
                }
            }
            "bribe_weighting" => {
                self.bribe_weighting = match value {
                    "sales" => BribeWeighting::SalesWeighted,
                    "unweighted" => BribeWeighting::Unweighted,
                    _ => return Err(bad(key)),
                }
            }
            "moment_loss" => {
                self.moment_loss = match value {
                    "chebyshev" => MomentLoss::Chebyshev,
                    "sum-squares" => MomentLoss::SumSquares,
                    _ => return Err(bad(key)),
                }
            }
            "scenarios" => {
                self.scenarios = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| Scenario::parse(s.trim()))
                    .collect::<Result<Vec<_>>>()?;
            }
            "tol" => self.tol = num(value, key)?,
            "jobs" => self.jobs = Some(value.parse().map_err(|_| bad(key))?),
            _ => return Err(Error::Input(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Loads a flat key=value file ('#' starts a comment line).
    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Input(format!(
                    "config line {} is not key=value: {line:?}",
                    lineno + 1
                ))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Canonical sorted rendering of every effective setting.
    pub fn canonical(&self) -> String {
        let path = |p: &Option<PathBuf>| {
            p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
        };
        let mut kv: BTreeMap<&str, String> = BTreeMap::new();
        kv.insert("input_dir", path(&self.input_dir));
        kv.insert("targets", path(&self.targets));
        kv.insert("params_file", path(&self.params_file));
        kv.insert("out_dir", self.out_dir.display().to_string());
        kv.insert("beta", format!("{}", self.beta));
        kv.insert("delta", format!("{}", self.delta));
        kv.insert("lambda", format!("{}", self.lambda));
        kv.insert("theta", format!("{}", self.theta));
        kv.insert("sigma0", format!("{}", self.sigma0));
        kv.insert("alpha0", format!("{}", self.alpha0));
        kv.insert("sigma1", format!("{}", self.sigma1));
        kv.insert("alpha1", format!("{}", self.alpha1));
        kv.insert("quad_nodes", format!("{}", self.quad_nodes));
        kv.insert("outlier_multiplier", format!("{}", self.outlier_multiplier));
        kv.insert(
            "kappa_definition",
            match self.kappa_definition {
                KappaDefinition::CapitalOverLaborCost => "labor_cost".to_string(),
                KappaDefinition::CapitalOverWorkers => "workers".to_string(),
            },
        );
        kv.insert(
            "bribe_weighting",
            match self.bribe_weighting {
                BribeWeighting::SalesWeighted => "sales".to_string(),
                BribeWeighting::Unweighted => "unweighted".to_string(),
            },
        );
        kv.insert(
            "moment_loss",
            match self.moment_loss {
                MomentLoss::Chebyshev => "chebyshev".to_string(),
                MomentLoss::SumSquares => "sum-squares".to_string(),
            },
        );
        kv.insert(
            "scenarios",
            self.scenarios
                .iter()
                .map(|s| s.name())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv.insert("tol", format!("{}", self.tol));
        let mut out = String::new();
        for (k, v) in kv {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }

    /// SHA-256 of the canonical rendering, hex-encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn shared_params(&self) -> SharedParams {
        SharedParams {
            beta: self.beta,
            delta: self.delta,
            lambda: self.lambda,
            theta: self.theta,
            tech0_shape: (self.sigma0, self.alpha0),
            tech1_shape: (self.sigma1, self.alpha1),
        }
    }

    pub fn quadrature(&self) -> QuadratureRule {
        QuadratureRule::gauss_legendre(self.quad_nodes)
    }
}

/// Something excluded from a run, with a machine-readable reason code.
#[derive(Debug, Clone, Serialize)]
pub struct Dropped {
    pub name: String,
    pub reason: String,
}

/// Reproducibility manifest written at the end of every command.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub config: BTreeMap<String, String>,
    pub tolerances: BTreeMap<String, f64>,
    pub dropped: Vec<Dropped>,
    pub outputs: Vec<String>,
}

impl Manifest {
    fn new(config: &RunConfig) -> Self {
        let mut kv = BTreeMap::new();
        for line in config.canonical().lines() {
            if let Some((k, v)) = line.split_once('=') {
                kv.insert(k.to_string(), v.to_string());
            }
        }
        let mut tolerances = BTreeMap::new();
        tolerances.insert("calibration_max_moment_error".to_string(), config.tol);
        tolerances.insert("equilibrium_residual".to_string(), 1e-8);
        tolerances.insert("free_entry_relative".to_string(), 1e-10);
        Manifest {
            tool: "bribery-ge".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
            config: kv,
            tolerances,
            dropped: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn write(&self, out_dir: &Path) -> Result<()> {
        write_atomic(
            &out_dir.join("manifest.json"),
            &(serde_json::to_string_pretty(self)? + "\n"),
        )
    }
}

fn write_atomic(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(content.as_bytes())?;
    Ok(())
}

/// Per-survey ingestion summary.
#[derive(Debug, Clone, Serialize)]
pub struct SurveyMoments {
    pub survey: String,
    pub n_firms: usize,
    pub n_used: usize,
    pub threshold: f64,
    pub modern_share: f64,
    pub bribery: BriberyRegime,
}

/// Ingestion output: per-survey moments, classified panels, and drops.
#[derive(Debug)]
pub struct IngestReport {
    pub moments: Vec<SurveyMoments>,
    pub panels: Vec<(String, ClassifiedPanel)>,
    pub dropped: Vec<Dropped>,
}

fn survey_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|e| e == "csv").unwrap_or(false))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Input(format!("no survey CSV files in {}", dir.display())));
    }
    Ok(files)
}

/// Loads, filters, classifies, and summarizes every survey in the input
/// directory. Surveys with fewer than [`MIN_SURVEY_FIRMS`] usable firms are
/// skipped with a recorded reason; nothing is written before all inputs
/// validate.
pub fn cmd_ingest(config: &RunConfig) -> Result<IngestReport> {
    let dir = config
        .input_dir
        .as_ref()
        .ok_or_else(|| Error::Input("ingest requires input_dir".to_string()))?;
    let files = survey_files(dir)?;
    let mut report = IngestReport {
        moments: Vec::new(),
        panels: Vec::new(),
        dropped: Vec::new(),
    };
    for file in files {
        let name = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| file.display().to_string());
        let loaded = load_firm_records(fs::File::open(&file)?)?;
        let n_firms = loaded.records.len();
        if n_firms < MIN_SURVEY_FIRMS {
            report.dropped.push(Dropped {
                name: name.clone(),
                reason: format!("survey_too_small: {n_firms} firms < {MIN_SURVEY_FIRMS}"),
            });
            continue;
        }
        let kept = filter_outliers(&loaded.records, config.outlier_multiplier)?;
        if kept.len() < MIN_SURVEY_FIRMS {
            report.dropped.push(Dropped {
                name: name.clone(),
                reason: format!(
                    "survey_too_small_after_outlier_filter: {} firms < {MIN_SURVEY_FIRMS}",
                    kept.len()
                ),
            });
            continue;
        }
        let ratios: Vec<f64> = kept
            .iter()
            .filter_map(|r| kappa(r, config.kappa_definition))
            .collect();
        let threshold = match kmeans_threshold(&ratios) {
            Ok(t) => t,
            Err(Error::NoSplit) => {
                report.dropped.push(Dropped {
                    name: name.clone(),
                    reason: "no_technology_split: all capital-labor ratios identical".to_string(),
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let panel = classify(&kept, threshold, config.kappa_definition);
        let bribery = bribery_moments(&panel, config.bribe_weighting);
        report.moments.push(SurveyMoments {
            survey: name.clone(),
            n_firms,
            n_used: panel.records.len(),
            threshold,
            modern_share: panel.modern_share(),
            bribery,
        });
        report.panels.push((name, panel));
    }
    Ok(report)
}

fn moments_csv(moments: &[SurveyMoments]) -> String {
    let mut out =
        String::from("survey,n_firms,n_used,threshold,modern_share,p0,tau0,p1,tau1\n");
    for m in moments {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            m.survey,
            m.n_firms,
            m.n_used,
            m.threshold,
            m.modern_share,
            m.bribery.p0,
            m.bribery.tau0,
            m.bribery.p1,
            m.bribery.tau1
        ));
    }
    out
}

/// Writes the ingest artifacts and manifest.
pub fn run_ingest(config: &RunConfig) -> Result<IngestReport> {
    let report = cmd_ingest(config)?;
    let mut manifest = Manifest::new(config);
    manifest.dropped.extend(report.dropped.iter().cloned());
    write_atomic(&config.out_dir.join("moments.csv"), &moments_csv(&report.moments))?;
    manifest.outputs.push("moments.csv".to_string());
    manifest.write(&config.out_dir)?;
    Ok(report)
}

/// Pooled per-technology production-parameter estimates.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub gamma0: f64,
    pub gamma1: f64,
    pub sigma0: f64,
    pub alpha0: f64,
    pub sigma1: f64,
    pub alpha1: f64,
    pub n_obs: [usize; 2],
}

/// Pools classified panels per technology and estimates (gamma, sigma,
/// alpha) for each. Regression variables are the reported levels: output =
/// sales, labor = labor cost, capital, control = intermediates.
pub fn cmd_estimate(config: &RunConfig, panels: &[(String, ClassifiedPanel)]) -> Result<EstimateReport> {
    let r = crate::equilibrium::interest_rate(config.beta, config.delta).rental;
    let mut pooled: [Vec<(f64, f64, f64, f64)>; 2] = [Vec::new(), Vec::new()];
    let mut profit_rows: [Vec<(f64, f64, f64, f64)>; 2] = [Vec::new(), Vec::new()];
    for (_, panel) in panels {
        for (rec, tech) in &panel.records {
            let t = *tech as usize;
            pooled[t].push((rec.sales, rec.labor_cost, rec.capital, rec.intermediate_cost));
            profit_rows[t].push((rec.sales, rec.labor_cost, r * rec.capital, rec.intermediate_cost));
        }
    }
    let order = 5;
    let est: Vec<_> = crate::map_batch(&[0usize, 1], |&t| {
        estimate_labor_elasticity(&pooled[t], order)
    });
    let [e0, e1] = <[_; 2]>::try_from(est).expect("two technologies");
    let (e0, e1) = (e0?, e1?);
    let s0 = mean_profit_share(&profit_rows[0])?;
    let s1 = mean_profit_share(&profit_rows[1])?;
    let (sigma0, alpha0) = recover_sigma_alpha(e0.gamma, s0)?;
    let (sigma1, alpha1) = recover_sigma_alpha(e1.gamma, s1)?;
    Ok(EstimateReport {
        gamma0: e0.gamma,
        gamma1: e1.gamma,
        sigma0,
        alpha0,
        sigma1,
        alpha1,
        n_obs: [e0.n_obs, e1.n_obs],
    })
}

/// Runs ingest + estimate and writes artifacts.
pub fn run_estimate(config: &RunConfig) -> Result<EstimateReport> {
    let ingest = cmd_ingest(config)?;
    let report = cmd_estimate(config, &ingest.panels)?;
    let mut manifest = Manifest::new(config);
    manifest.dropped.extend(ingest.dropped.iter().cloned());
    write_atomic(
        &config.out_dir.join("estimates.json"),
        &(serde_json::to_string_pretty(&report)? + "\n"),
    )?;
    manifest.outputs.push("estimates.json".to_string());
    manifest.write(&config.out_dir)?;
    Ok(report)
}

/// One row of the calibration-targets CSV.
#[derive(Debug, Clone)]
pub struct CountryRow {
    pub country: String,
    pub year: u32,
    pub targets: CountryTargets,
}

const TARGETS_HEADER: [&str; 9] = [
    "country",
    "year",
    "gdp_pc",
    "modern_share",
    "modern_output_share",
    "p0",
    "tau0",
    "p1",
    "tau1",
];

/// Reads the calibration targets CSV
/// `country,year,gdp_pc,modern_share,modern_output_share,p0,tau0,p1,tau1`.
pub fn load_targets(path: &Path) -> Result<Vec<CountryRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(fs::File::open(path)?);
    let header: Vec<String> = reader.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header != TARGETS_HEADER {
        return Err(Error::Input(format!(
            "targets header mismatch: expected {TARGETS_HEADER:?}, got {header:?}"
        )));
    }
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = idx + 2;
        let field = |i: usize| record.get(i).unwrap_or("").trim().to_string();
        let num = |i: usize, name: &str| -> Result<f64> {
            field(i).parse::<f64>().map_err(|_| Error::BadRecord {
                row: row_no,
                column: name.to_string(),
                reason: format!("not a number: {:?}", field(i)),
            })
        };
        let targets = CountryTargets {
            gdp_pc_normalized: num(2, "gdp_pc")?,
            modern_share: num(3, "modern_share")?,
            modern_output_share: num(4, "modern_output_share")?,
            bribery: BriberyRegime::new(num(5, "p0")?, num(6, "tau0")?, num(7, "p1")?, num(8, "tau1")?)?,
        };
        targets.validate()?;
        rows.push(CountryRow {
            country: field(0),
            year: field(1).parse().map_err(|_| Error::BadRecord {
                row: row_no,
                column: "year".to_string(),
                reason: format!("not a year: {:?}", field(1)),
            })?,
            targets,
        });
    }
    if rows.is_empty() {
        return Err(Error::Input(format!("no countries in {}", path.display())));
    }
    Ok(rows)
}

/// Calibration outcome for one country, as serialized to JSON lines.
#[derive(Debug, Clone, Serialize)]
pub struct CountryCalibration {
    pub country: String,
    pub year: u32,
    pub gdp_pc: f64,
    pub converged: bool,
    pub feasible: bool,
    pub residuals: [f64; 3],
    pub iterations: usize,
    pub params: EconomyParams,
    pub equilibrium: crate::equilibrium::Equilibrium,
}

/// Calibrates every country in the targets file, in parallel.
pub fn cmd_calibrate(config: &RunConfig) -> Result<(Vec<CountryCalibration>, Vec<Dropped>)> {
    let path = config
        .targets
        .as_ref()
        .ok_or_else(|| Error::Input("calibrate requires targets".to_string()))?;
    let rows = load_targets(path)?;
    let shared = config.shared_params();
    let rule = config.quadrature();
    let loss = config.moment_loss;
    let results = crate::map_batch(&rows, |row| {
        calibrate_country(&row.targets, &shared, loss, &rule).map(|res| CountryCalibration {
            country: row.country.clone(),
            year: row.year,
            gdp_pc: row.targets.gdp_pc_normalized,
            converged: res.residuals.iter().copied().fold(0.0, f64::max) < config.tol,
            feasible: res.feasible,
            residuals: res.residuals,
            iterations: res.iterations,
            params: res.params,
            equilibrium: res.equilibrium,
        })
    });
    let mut ok = Vec::new();
    let mut dropped = Vec::new();
    for (row, res) in rows.iter().zip(results) {
        match res {
            Ok(c) if !c.converged => {
                dropped.push(Dropped {
                    name: row.country.clone(),
                    reason: format!(
                        "calibration_not_converged: max moment error {:.3e}",
                        c.residuals.iter().copied().fold(0.0, f64::max)
                    ),
                });
                ok.push(c); // kept in the JSONL audit trail, excluded from tables
            }
            Ok(c) if !c.feasible => {
                dropped.push(Dropped {
                    name: row.country.clone(),
                    reason: "operating_cost_at_floor: calibrated c1 pinned at positivity bound"
                        .to_string(),
                });
                ok.push(c);
            }
            Ok(c) => ok.push(c),
            Err(e) => dropped.push(Dropped {
                name: row.country.clone(),
                reason: format!("calibration_error: {e}"),
            }),
        }
    }
    Ok((ok, dropped))
}

fn calibrations_jsonl(calibrations: &[CountryCalibration]) -> Result<String> {
    let mut out = String::new();
    for c in calibrations {
        out.push_str(&serde_json::to_string(c)?);
        out.push('\n');
    }
    Ok(out)
}

/// Runs calibration and writes the JSONL artifact and manifest.
pub fn run_calibrate(config: &RunConfig) -> Result<Vec<CountryCalibration>> {
    let (calibrations, dropped) = cmd_calibrate(config)?;
    let mut manifest = Manifest::new(config);
    manifest.dropped = dropped;
    write_atomic(
        &config.out_dir.join("calibrations.jsonl"),
        &calibrations_jsonl(&calibrations)?,
    )?;
    manifest.outputs.push("calibrations.jsonl".to_string());
    manifest.write(&config.out_dir)?;
    Ok(calibrations)
}

/// Solves one parameter file and returns the equilibrium JSON.
pub fn cmd_solve_one(config: &RunConfig) -> Result<String> {
    let path = config
        .params_file
        .as_ref()
        .ok_or_else(|| Error::Input("solve requires params_file".to_string()))?;
    let params: EconomyParams = serde_json::from_str(&fs::read_to_string(path)?)?;
    let rule = config.quadrature();
    let eq = stationary_equilibrium(&params, &rule)?;
    // Invariants were already enforced inside the solver; re-run the
    // residual suite so the printed report carries the numbers.
    let res = residuals(&params, &eq, &rule);
    #[derive(Serialize)]
    struct SolveOutput {
        equilibrium: crate::equilibrium::Equilibrium,
        residuals: Vec<(String, f64)>,
    }
    Ok(serde_json::to_string_pretty(&SolveOutput { equilibrium: eq, residuals: res })? + "\n")
}

fn scenario_file_stem(s: &Scenario) -> String {
    s.name().replace(':', "_")
}

/// Calibrates, runs every configured scenario on every converged country,
/// and writes per-scenario income-group tables.
pub fn run_counterfactuals(config: &RunConfig) -> Result<()> {
    let (calibrations, mut dropped) = cmd_calibrate(config)?;
    let usable: Vec<&CountryCalibration> = calibrations
        .iter()
        .filter(|c| c.converged && c.feasible)
        .collect();
    if usable.is_empty() {
        return Err(Error::Input("no converged calibrations to run scenarios on".to_string()));
    }
    let grouped = group_by_income(
        &usable
            .iter()
            .enumerate()
            .map(|(i, c)| (c.gdp_pc, i))
            .collect::<Vec<_>>(),
    )?;
    let group_of: BTreeMap<usize, IncomeGroup> =
        grouped.iter().map(|(g, _, i)| (*i, *g)).collect();
    let rule = config.quadrature();

    // (country, scenario) grid, embarrassingly parallel; results are merged
    // back in deterministic grid order.
    let grid: Vec<(usize, Scenario)> = (0..usable.len())
        .flat_map(|i| config.scenarios.iter().map(move |s| (i, *s)))
        .collect();
    let results = crate::map_batch(&grid, |(i, scenario)| {
        let c = usable[*i];
        run_counterfactual(&c.params, &c.equilibrium, *scenario, &rule)
    });

    let mut manifest = Manifest::new(config);
    let mut tables_json: BTreeMap<String, Vec<crate::counterfactual::TableRow>> = BTreeMap::new();
    for scenario in &config.scenarios {
        let mut per_group = Vec::new();
        for ((i, s), res) in grid.iter().zip(&results) {
            if s != scenario {
                continue;
            }
            match res {
                Ok(r) => per_group.push((group_of[i], r)),
                Err(e) => dropped.push(Dropped {
                    name: format!("{}/{}", usable[*i].country, s.name()),
                    reason: format!("scenario_error: {e}"),
                }),
            }
        }
        if per_group.is_empty() {
            continue;
        }
        let rows = income_group_table(&per_group)?;
        let stem = scenario_file_stem(scenario);
        let file = format!("table_{stem}.csv");
        write_atomic(&config.out_dir.join(&file), &table_to_csv(&rows))?;
        manifest.outputs.push(file);
        tables_json.insert(scenario.name(), rows);
    }
    write_atomic(
        &config.out_dir.join("tables.json"),
        &(serde_json::to_string_pretty(&tables_json)? + "\n"),
    )?;
    manifest.outputs.push("tables.json".to_string());
    write_atomic(
        &config.out_dir.join("calibrations.jsonl"),
        &calibrations_jsonl(&calibrations)?,
    )?;
    manifest.outputs.push("calibrations.jsonl".to_string());
    manifest.dropped = dropped;
    manifest.outputs.sort();
    manifest.write(&config.out_dir)?;
    Ok(())
}

/// Full pipeline: ingest and estimate when firm data is configured, then
/// calibrate, solve, run scenarios, and write the report bundle.
pub fn cmd_pipeline(config: &RunConfig) -> Result<()> {
    let mut effective = config.clone();
    let mut manifest_extra: Vec<Dropped> = Vec::new();
    let mut ingest_outputs: Vec<(String, String)> = Vec::new();
    if config.input_dir.is_some() {
        let ingest = cmd_ingest(config)?;
        manifest_extra.extend(ingest.dropped.iter().cloned());
        ingest_outputs.push(("moments.csv".to_string(), moments_csv(&ingest.moments)));
        match cmd_estimate(config, &ingest.panels) {
            Ok(est) => {
                effective.sigma0 = est.sigma0;
                effective.alpha0 = est.alpha0;
                effective.sigma1 = est.sigma1;
                effective.alpha1 = est.alpha1;
                ingest_outputs.push((
                    "estimates.json".to_string(),
                    serde_json::to_string_pretty(&est)? + "\n",
                ));
            }
            Err(e) => {
                return Err(Error::Input(format!("estimation stage failed: {e}")));
            }
        }
    }
    run_counterfactuals(&effective)?;
    // Fold the ingest artifacts and drops into the already-written manifest.
    let manifest_path = config.out_dir.join("manifest.json");
    let mut manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    for (name, content) in &ingest_outputs {
        write_atomic(&config.out_dir.join(name), content)?;
        if let Some(outputs) = manifest["outputs"].as_array_mut() {
            outputs.push(serde_json::Value::String(name.clone()));
        }
    }
    if let Some(arr) = manifest["dropped"].as_array_mut() {
        for d in &manifest_extra {
            arr.push(serde_json::to_value(d)?);
        }
    }
    if let Some(outputs) = manifest["outputs"].as_array_mut() {
        let mut names: Vec<String> = outputs
            .iter()
            .filter_map(|v| v.as_str().map(String::from))
            .collect();
        names.sort();
        names.dedup();
        *outputs = names.into_iter().map(serde_json::Value::String).collect();
    }
    write_atomic(&manifest_path, &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    Ok(())
}

/// Process exit code for an error, per the documented contract:
/// 2 input error, 3 solver failure, 4 invariant violation.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvariantViolation(_) => 4,
        Error::NoEquilibriumWage { .. }
        | Error::NonMonotoneEntryValue(_)
        | Error::DivergentValue
        | Error::CalibrationFailed(_)
        | Error::NonFiniteIntegrand { .. }
        | Error::NoSplit
        | Error::RankDeficient(_)
        | Error::InconsistentMoments(_) => 3,
        _ => 2,
    }
}
