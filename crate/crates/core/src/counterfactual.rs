//! Counterfactual policy scenarios: apply a scenario to a calibrated
//! economy, re-solve, and split each net change into an intensive margin
//! (adoption rule frozen at the baseline threshold line) and an extensive
//! residual. Per-country results aggregate into income-group tables.

use crate::calibration::IncomeGroup;
use crate::dist::QuadratureRule;
use crate::equilibrium::{
    stationary_equilibrium, stationary_equilibrium_frozen, EconomyParams, Equilibrium,
};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Policy experiment applied to a calibrated economy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scenario {
    NoBribery,
    NoModernBribery,
    NoTraditionalBribery,
    ScaleModernTFP(f64),
    ScaleEntryCost(f64),
    ScaleOperatingCost(f64),
    UniformBribe { p: f64, tau: f64 },
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Scenario::ScaleModernTFP(f)
            | Scenario::ScaleEntryCost(f)
            | Scenario::ScaleOperatingCost(f) => {
                if !(f > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "scenario scale factor must be positive, got {f}"
                    )));
                }
            }
            Scenario::UniformBribe { p, tau }
                if (!(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&tau)) => {
                    return Err(Error::InvalidParameter(format!(
                        "uniform bribe needs p, tau in [0,1], got ({p}, {tau})"
                    )));
                }
            _ => {}
        }
        Ok(())
    }

    /// Stable name used in output files and on the command line.
    pub fn name(&self) -> String {
        match *self {
            Scenario::NoBribery => "no-bribery".to_string(),
            Scenario::NoModernBribery => "no-modern-bribery".to_string(),
            Scenario::NoTraditionalBribery => "no-traditional-bribery".to_string(),
            Scenario::ScaleModernTFP(f) => format!("scale-modern-tfp:{f}"),
            Scenario::ScaleEntryCost(f) => format!("scale-entry-cost:{f}"),
            Scenario::ScaleOperatingCost(f) => format!("scale-operating-cost:{f}"),
            Scenario::UniformBribe { p, tau } => format!("uniform-bribe:{p}:{tau}"),
        }
    }

    /// Parses `name` or `name:arg[:arg]` as produced by [`Scenario::name`].
    pub fn parse(text: &str) -> Result<Self> {
        let mut parts = text.split(':');
        let head = parts.next().unwrap_or("");
        let args: Vec<&str> = parts.collect();
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Input(format!("bad scenario argument {s:?} in {text:?}")))
        };
        let scenario = match (head, args.as_slice()) {
            ("no-bribery", []) => Scenario::NoBribery,
            ("no-modern-bribery", []) => Scenario::NoModernBribery,
            ("no-traditional-bribery", []) => Scenario::NoTraditionalBribery,
            ("scale-modern-tfp", [f]) => Scenario::ScaleModernTFP(num(f)?),
            ("scale-entry-cost", [f]) => Scenario::ScaleEntryCost(num(f)?),
            ("scale-operating-cost", [f]) => Scenario::ScaleOperatingCost(num(f)?),
            ("uniform-bribe", [p, tau]) => Scenario::UniformBribe {
                p: num(p)?,
                tau: num(tau)?,
            },
            _ => return Err(Error::Input(format!("unknown scenario {text:?}"))),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// The seven scenarios reported in the benchmark tables, in table order.
    pub fn registry() -> Vec<Scenario> {
        vec![
            Scenario::NoBribery,
            Scenario::NoModernBribery,
            Scenario::NoTraditionalBribery,
            Scenario::ScaleModernTFP(1.2),
            Scenario::ScaleEntryCost(0.8),
            Scenario::ScaleOperatingCost(0.8),
            Scenario::UniformBribe { p: 0.5, tau: 0.10 },
        ]
    }
}

/// Transforms baseline parameters under a scenario; everything not named by
/// the scenario is kept intact.
pub fn apply_scenario(params: &EconomyParams, scenario: Scenario) -> Result<EconomyParams> {
    scenario.validate()?;
    let mut out = *params;
    match scenario {
        Scenario::NoBribery => {
            out.bribery.p0 = 0.0;
            out.bribery.p1 = 0.0;
        }
        Scenario::NoModernBribery => out.bribery.p1 = 0.0,
        Scenario::NoTraditionalBribery => out.bribery.p0 = 0.0,
        Scenario::ScaleModernTFP(f) => out.tech1.a *= f,
        Scenario::ScaleEntryCost(f) => out.entry_cost *= f,
        Scenario::ScaleOperatingCost(f) => out.tech1.c *= f,
        Scenario::UniformBribe { p, tau } => {
            out.bribery.p0 = p;
            out.bribery.tau0 = tau;
            out.bribery.p1 = p;
            out.bribery.tau1 = tau;
        }
    }
    Ok(out)
}

/// Reported indicators, in table row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Indicator {
    Output,
    Consumption,
    Capital,
    Wage,
    ModernOutputShare,
    Entry,
    ModernFraction,
}

impl Indicator {
    pub const ALL: [Indicator; 7] = [
        Indicator::Output,
        Indicator::Consumption,
        Indicator::Capital,
        Indicator::Wage,
        Indicator::ModernOutputShare,
        Indicator::Entry,
        Indicator::ModernFraction,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Indicator::Output => "output",
            Indicator::Consumption => "consumption",
            Indicator::Capital => "capital",
            Indicator::Wage => "wage",
            Indicator::ModernOutputShare => "modern_output_share",
            Indicator::Entry => "entry",
            Indicator::ModernFraction => "modern_fraction",
        }
    }

    /// Entry and the modern fraction report net changes only.
    pub fn decomposed(&self) -> bool {
        !matches!(self, Indicator::Entry | Indicator::ModernFraction)
    }

    fn read(&self, eq: &Equilibrium) -> f64 {
        match self {
            Indicator::Output => eq.output,
            Indicator::Consumption => eq.consumption,
            Indicator::Capital => eq.capital,
            Indicator::Wage => eq.wage,
            Indicator::ModernOutputShare => eq.modern_output_share,
            Indicator::Entry => eq.firm_mass,
            Indicator::ModernFraction => eq.modern_fraction,
        }
    }
}

/// One indicator's percent changes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorChange {
    pub net: f64,
    /// None for net-only indicators.
    pub intensive: Option<f64>,
    pub extensive: Option<f64>,
}

/// Full per-country scenario result.
#[derive(Debug, Clone, Serialize)]
pub struct CounterfactualResult {
    pub scenario: Scenario,
    pub changes: Vec<(Indicator, IndicatorChange)>,
    pub counterfactual: Equilibrium,
}

impl CounterfactualResult {
    pub fn change(&self, indicator: Indicator) -> IndicatorChange {
        self.changes
            .iter()
            .find(|(i, _)| *i == indicator)
            .map(|(_, c)| *c)
            .expect("all indicators populated")
    }
}

fn percent_change(base: f64, cf: f64) -> f64 {
    100.0 * (cf / base - 1.0)
}

/// Solves the scenario equilibrium and decomposes every indicator's net
/// change relative to `base_eq`.
pub fn run_counterfactual(
    base_params: &EconomyParams,
    base_eq: &Equilibrium,
    scenario: Scenario,
    rule: &QuadratureRule,
) -> Result<CounterfactualResult> {
    let cf_params = apply_scenario(base_params, scenario)?;
    let cf_eq = stationary_equilibrium(&cf_params, rule)?;
    let frozen_eq = stationary_equilibrium_frozen(&cf_params, &base_eq.threshold, rule)?;
    let mut changes = Vec::with_capacity(Indicator::ALL.len());
    for ind in Indicator::ALL {
        let net = percent_change(ind.read(base_eq), ind.read(&cf_eq));
        let (intensive, extensive) = if ind.decomposed() {
            let intensive = percent_change(ind.read(base_eq), ind.read(&frozen_eq));
            // Extensive is the residual, so additivity is exact.
            (Some(intensive), Some(net - intensive))
        } else {
            (None, None)
        };
        changes.push((ind, IndicatorChange { net, intensive, extensive }));
    }
    Ok(CounterfactualResult {
        scenario,
        changes,
        counterfactual: cf_eq,
    })
}

/// Intensive/extensive split only, without the full result envelope.
pub fn decompose_margins(
    base_params: &EconomyParams,
    base_eq: &Equilibrium,
    scenario: Scenario,
    rule: &QuadratureRule,
) -> Result<Vec<(Indicator, f64, f64)>> {
    let result = run_counterfactual(base_params, base_eq, scenario, rule)?;
    Ok(result
        .changes
        .iter()
        .filter(|(i, _)| i.decomposed())
        .map(|(i, c)| (*i, c.intensive.unwrap(), c.extensive.unwrap()))
        .collect())
}

/// One rendered table row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub group: IncomeGroup,
    pub indicator: Indicator,
    pub intensive: Option<f64>,
    pub extensive: Option<f64>,
    pub net: f64,
}

/// Unweighted within-group means of each cell, rows in fixed table order
/// (low, middle, high within each indicator block).
pub fn income_group_table(
    results: &[(IncomeGroup, &CounterfactualResult)],
) -> Result<Vec<TableRow>> {
    if results.is_empty() {
        return Err(Error::Input("no counterfactual results to tabulate".to_string()));
    }
    let mut rows = Vec::new();
    for ind in Indicator::ALL {
        for group in IncomeGroup::ALL {
            let cells: Vec<IndicatorChange> = results
                .iter()
                .filter(|(g, _)| *g == group)
                .map(|(_, r)| r.change(ind))
                .collect();
            if cells.is_empty() {
                continue;
            }
            let n = cells.len() as f64;
            let net = cells.iter().map(|c| c.net).sum::<f64>() / n;
            let (intensive, extensive) = if ind.decomposed() {
                (
                    Some(cells.iter().map(|c| c.intensive.unwrap()).sum::<f64>() / n),
                    Some(cells.iter().map(|c| c.extensive.unwrap()).sum::<f64>() / n),
                )
            } else {
                (None, None)
            };
            rows.push(TableRow { group, indicator: ind, intensive, extensive, net });
        }
    }
    Ok(rows)
}

/// Renders table rows as CSV: `group,indicator,intensive,extensive,net`,
/// with empty margin cells for net-only indicators.
pub fn table_to_csv(rows: &[TableRow]) -> String {
    let mut out = String::from("group,indicator,intensive,extensive,net\n");
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.6}\n",
            row.group.label(),
            row.indicator.label(),
            cell(row.intensive),
            cell(row.extensive),
            row.net
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::SharedParams;
    use crate::firmdata::BriberyRegime;
    use approx::assert_relative_eq;

    fn rule() -> QuadratureRule {
        QuadratureRule::gauss_legendre(200)
    }

    fn base() -> EconomyParams {
        SharedParams::benchmark()
            .economy(0.7, 2.0, 0.05, BriberyRegime::new(0.28, 0.0196, 0.34, 0.026).unwrap())
            .unwrap()
    }

    #[test]
    fn scenario_names_round_trip() {
        for s in Scenario::registry() {
            assert_eq!(Scenario::parse(&s.name()).unwrap(), s);
        }
        assert!(Scenario::parse("no-such-scenario").is_err());
        assert!(Scenario::parse("scale-modern-tfp:-1").is_err());
        assert!(Scenario::parse("uniform-bribe:0.5").is_err());
        assert!(Scenario::parse("uniform-bribe:2:0.1").is_err());
    }

    #[test]
    fn apply_scenario_transforms() {
        let p = base();
        let nb = apply_scenario(&p, Scenario::NoBribery).unwrap();
        assert_eq!((nb.bribery.p0, nb.bribery.p1), (0.0, 0.0));
        // Sizes kept; only incidence is switched off.
        assert_eq!(nb.bribery.tau0, p.bribery.tau0);
        let nm = apply_scenario(&p, Scenario::NoModernBribery).unwrap();
        assert_eq!(nm.bribery.p1, 0.0);
        assert_eq!(nm.bribery.p0, p.bribery.p0);
        let nt = apply_scenario(&p, Scenario::NoTraditionalBribery).unwrap();
        assert_eq!(nt.bribery.p0, 0.0);
        assert_eq!(nt.bribery.p1, p.bribery.p1);
        let tfp = apply_scenario(&p, Scenario::ScaleModernTFP(1.2)).unwrap();
        assert_relative_eq!(tfp.tech1.a, 1.2 * p.tech1.a);
        let ec = apply_scenario(&p, Scenario::ScaleEntryCost(0.8)).unwrap();
        assert_relative_eq!(ec.entry_cost, 0.8 * p.entry_cost);
        let oc = apply_scenario(&p, Scenario::ScaleOperatingCost(0.8)).unwrap();
        assert_relative_eq!(oc.tech1.c, 0.8 * p.tech1.c);
        let ub = apply_scenario(&p, Scenario::UniformBribe { p: 0.25, tau: 0.2 }).unwrap();
        assert_eq!(
            (ub.bribery.p0, ub.bribery.tau0, ub.bribery.p1, ub.bribery.tau1),
            (0.25, 0.2, 0.25, 0.2)
        );
    }

    #[test]
    fn table8_regimes_share_expected_bribe() {
        for (p, tau) in [(0.5, 0.10), (0.25, 0.20), (0.1, 0.50)] {
            assert_relative_eq!(p * tau, 0.05, epsilon = 1e-12);
        }
    }

    #[test]
    fn identity_scenario_changes_nothing() {
        let rule = rule();
        let params = base();
        let eq = stationary_equilibrium(&params, &rule).unwrap();
        let res = run_counterfactual(&params, &eq, Scenario::ScaleModernTFP(1.0), &rule).unwrap();
        for (ind, c) in &res.changes {
            assert!(c.net.abs() < 1e-6, "{} net {}", ind.label(), c.net);
            if let Some(i) = c.intensive {
                assert!(i.abs() < 1e-6);
            }
        }
    }

    #[test]
    fn no_bribery_idempotent_and_zeroes_transfer() {
        let rule = rule();
        let params = base();
        let once = apply_scenario(&params, Scenario::NoBribery).unwrap();
        let twice = apply_scenario(&once, Scenario::NoBribery).unwrap();
        assert_eq!(once, twice);
        let eq = stationary_equilibrium(&once, &rule).unwrap();
        assert_eq!(eq.bribe_transfer, 0.0);
    }

    #[test]
    fn margins_additive_and_residual() {
        let rule = rule();
        let params = base();
        let eq = stationary_equilibrium(&params, &rule).unwrap();
        for scenario in Scenario::registry() {
            let res = run_counterfactual(&params, &eq, scenario, &rule).unwrap();
            for (ind, c) in &res.changes {
                if ind.decomposed() {
                    let (i, e) = (c.intensive.unwrap(), c.extensive.unwrap());
                    assert!(
                        (i + e - c.net).abs() < 1e-12,
                        "{}: {} + {} != {}",
                        ind.label(),
                        i,
                        e,
                        c.net
                    );
                } else {
                    assert!(c.intensive.is_none() && c.extensive.is_none());
                }
            }
        }
    }

    #[test]
    fn uniform_bribe_at_current_regime_has_zero_extensive_margin() {
        // Baseline already at the uniform regime: the scenario is a no-op,
        // the threshold cannot move, and every extensive cell is zero.
        let rule = rule();
        let params = SharedParams::benchmark()
            .economy(0.7, 2.0, 0.05, BriberyRegime::new(0.3, 0.08, 0.3, 0.08).unwrap())
            .unwrap();
        let eq = stationary_equilibrium(&params, &rule).unwrap();
        let res = run_counterfactual(
            &params,
            &eq,
            Scenario::UniformBribe { p: 0.3, tau: 0.08 },
            &rule,
        )
        .unwrap();
        for (ind, c) in &res.changes {
            if let Some(e) = c.extensive {
                assert!(e.abs() < 1e-6, "{} extensive {}", ind.label(), e);
            }
        }
    }

    #[test]
    fn group_table_means_and_layout() {
        let rule = rule();
        let params = base();
        let eq = stationary_equilibrium(&params, &rule).unwrap();
        let r1 = run_counterfactual(&params, &eq, Scenario::NoBribery, &rule).unwrap();
        let mut params2 = params;
        params2.tech0.a = 0.5;
        let eq2 = stationary_equilibrium(&params2, &rule).unwrap();
        let r2 = run_counterfactual(&params2, &eq2, Scenario::NoBribery, &rule).unwrap();

        // Two identical countries in one group: mean equals either.
        let rows = income_group_table(&[(IncomeGroup::Low, &r1), (IncomeGroup::Low, &r1)]).unwrap();
        let y_row = rows
            .iter()
            .find(|r| r.indicator == Indicator::Output && r.group == IncomeGroup::Low)
            .unwrap();
        assert_relative_eq!(y_row.net, r1.change(Indicator::Output).net, epsilon = 1e-12);

        // Hand-computed mean of two distinct countries.
        let rows =
            income_group_table(&[(IncomeGroup::Low, &r1), (IncomeGroup::Low, &r2)]).unwrap();
        let y_row = rows
            .iter()
            .find(|r| r.indicator == Indicator::Output && r.group == IncomeGroup::Low)
            .unwrap();
        let expected =
            0.5 * (r1.change(Indicator::Output).net + r2.change(Indicator::Output).net);
        assert_relative_eq!(y_row.net, expected, epsilon = 1e-12);

        // One country per group: rows equal the country cells, CSV shape.
        let rows = income_group_table(&[
            (IncomeGroup::Low, &r1),
            (IncomeGroup::Middle, &r2),
            (IncomeGroup::High, &r1),
        ])
        .unwrap();
        assert_eq!(rows.len(), 21);
        assert_eq!(rows[0].indicator, Indicator::Output);
        assert_eq!(rows[0].group, IncomeGroup::Low);
        let csv = table_to_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "group,indicator,intensive,extensive,net");
        assert_eq!(csv.lines().count(), 22);
        // Net-only rows have empty margin cells.
        let entry_line = csv
            .lines()
            .find(|l| l.starts_with("low,entry"))
            .unwrap();
        let cells: Vec<&str> = entry_line.split(',').collect();
        assert_eq!(cells[2], "");
        assert_eq!(cells[3], "");
        assert!(!cells[4].is_empty());
    }
}
