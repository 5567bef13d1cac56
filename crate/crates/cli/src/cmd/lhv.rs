use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Subcommand, ValueEnum};
use etbell_core::lhv::{
    classical_bound, counterfactual_audit, evaluate_postselected, event_stream, max_mu_setting_dependent,
    max_mu_setting_independent, scaled_model, strategy_outcome, table1_model, table1_rows, SelectionRule,
    SettingsSchedule, StrategyEnsemble, Weight,
};
use etbell_core::source::{analyze_events, write_events_csv};
use etbell_core::states::BellFunctional;
use num_rational::Rational64;
use serde_json::json;

use super::{functional_for, FormArg, ScheduleArg};
use crate::report::Report;
use crate::{Common, Format, Output};

/// Nominal instruction-set count usually quoted for this model.
const NOMINAL_TOTAL: usize = 1536;

#[derive(Debug, Subcommand)]
pub enum LhvCommand {
    /// Verify the three-party Franson-geometry model
    Table1 {
        /// Also write the expanded ensemble as JSON
        #[arg(long)]
        ensemble_out: Option<PathBuf>,
    },
    /// Exhaustive maximization of the postselected value
    Search {
        #[arg(long, value_enum, default_value_t = Selection::Dependent)]
        selection: Selection,
        #[arg(long, value_enum)]
        form: Option<FormArg>,
    },
    /// Mixture reaching a prescribed value in [0, 4]
    Scale {
        #[arg(long)]
        target: f64,
    },
    /// Sample events from a model and estimate the correlations
    Stream {
        #[arg(long, value_enum, default_value_t = Model::Table1)]
        model: Model,
        /// Target value for `--model scaled`
        #[arg(long)]
        target: Option<f64>,
        #[arg(long, value_enum, default_value_t = ScheduleArg::Uniform)]
        schedule: ScheduleArg,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Selection {
    /// Time bins may depend on the local setting
    Dependent,
    /// Time bins fixed regardless of setting
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Table1,
    Scaled,
}

fn r(n: i64, d: i64) -> Rational64 {
    Rational64::new(n, d)
}

fn exact(v: &Rational64) -> serde_json::Value {
    json!({"exact": v.to_string(), "value": v.to_f64()})
}

pub fn run(common: &Common, command: &LhvCommand) -> anyhow::Result<Output> {
    match command {
        LhvCommand::Table1 { ensemble_out } => table1(ensemble_out.as_ref()),
        LhvCommand::Search { selection, form } => search(common, *selection, *form),
        LhvCommand::Scale { target } => scale(common, *target),
        LhvCommand::Stream {
            model,
            target,
            schedule,
        } => stream(common, *model, *target, *schedule),
    }
}

fn table1(ensemble_out: Option<&PathBuf>) -> anyhow::Result<Output> {
    let model = table1_model();
    let f = BellFunctional::mermin3();
    let res = evaluate_postselected(&model, SelectionRule::SameBin, &f)?;
    let mut rep = Report::new("lhv table1");
    let row_sizes: Vec<usize> = table1_rows().iter().map(Vec::len).collect();
    rep.set(
        "expansion",
        json!({"row_sizes": row_sizes, "total": model.len(), "nominal_total": NOMINAL_TOTAL}),
    );
    rep.set(
        "terms",
        res.terms
            .iter()
            .map(|t| {
                json!({
                    "settings": t.settings,
                    "coeff": t.coeff,
                    "value": t.value.as_ref().map(exact),
                    "selected_fraction": exact(&t.selected_fraction),
                })
            })
            .collect::<Vec<_>>(),
    );
    let mu = res.mu.context("a term has no selected events")?;
    let rejection = Rational64::from_integer(1) - res.selection_rate;
    rep.set("mu", exact(&mu))
        .set("selection_rate", exact(&res.selection_rate))
        .set("rejection_rate", exact(&rejection));

    let values: Vec<Option<String>> = res.terms.iter().map(|t| t.value.map(|v| v.to_string())).collect();
    let expect: Vec<Option<String>> = ["1", "1", "1", "-1"].iter().map(|s| Some(s.to_string())).collect();
    rep.check_eq("terms", values, expect);
    rep.check_eq("mu", mu.to_string(), "4".into());
    rep.check_eq("selection_rate", res.selection_rate.to_string(), "1/4".into());
    rep.check_eq("rejection_rate", rejection.to_string(), "3/4".into());

    let labels = ["S+", "S-", "L+", "L-"];
    let mut marginals = Vec::new();
    for party in 0..3 {
        for setting in 0..2u8 {
            let m = model.marginal(party, setting)?;
            let strs: Vec<String> = m.iter().map(|v| v.to_string()).collect();
            rep.check_eq(
                &format!("marginal party {party} setting {setting}"),
                strs.clone(),
                vec!["1/4".to_string(); 4],
            );
            marginals.push(json!({
                "party": party,
                "setting": setting,
                "outcomes": labels.iter().zip(&strs).map(|(l, v)| json!({"outcome": l, "p": v})).collect::<Vec<_>>(),
            }));
        }
    }
    rep.set("marginals", marginals);
    rep.set(
        "setting_dependent_selection_weight",
        exact(&counterfactual_audit(&model, SelectionRule::SameBin)),
    );
    if let Some(path) = ensemble_out {
        std::fs::write(path, serde_json::to_string_pretty(&model)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(Output::Report(rep))
}

fn search(common: &Common, selection: Selection, form: Option<FormArg>) -> anyhow::Result<Output> {
    let n = common.n.unwrap_or(3);
    if !(2..=5).contains(&n) {
        bail!("search supports 2 ≤ n ≤ 5 (16^n joint strategies)");
    }
    let f = functional_for(n, form)?;
    let (res, expected, label) = match selection {
        Selection::Dependent => (
            max_mu_setting_dependent(&f, SelectionRule::SameBin)?,
            f.algebraic_max(),
            "algebraic_max",
        ),
        Selection::Independent => (
            max_mu_setting_independent(&f, SelectionRule::SameBin)?,
            classical_bound(&f),
            "classical_bound",
        ),
    };
    let mut rep = Report::new("lhv search");
    let witness_terms = evaluate_postselected(&res.witness, SelectionRule::SameBin, &f)?;
    rep.set("n", n)
        .set("selection", format!("{selection:?}").to_lowercase())
        .set("strategies_enumerated", res.strategies_enumerated)
        .set("mu_max", exact(&res.mu_max))
        .set(label, expected)
        .set("witness_size", res.witness.len())
        .set(
            "witness_terms",
            witness_terms
                .terms
                .iter()
                .map(|t| json!({"settings": t.settings, "value": t.value.as_ref().map(exact)}))
                .collect::<Vec<_>>(),
        );
    let tol = common.tol_or(1e-12);
    rep.check_close(&format!("mu_max equals {label}"), res.mu_max.to_f64(), expected, tol);
    if n == 3 {
        let want = match selection {
            Selection::Dependent => r(4, 1),
            Selection::Independent => r(2, 1),
        };
        rep.check_eq("mu_max exact", res.mu_max.to_string(), want.to_string());
        rep.check_eq(
            "strategies_enumerated",
            res.strategies_enumerated,
            match selection {
                Selection::Dependent => 4096,
                Selection::Independent => 512,
            },
        );
    }
    Ok(Output::Report(rep))
}

fn scale(common: &Common, target: f64) -> anyhow::Result<Output> {
    let model = scaled_model(target)?;
    let f = BellFunctional::mermin3();
    let res = evaluate_postselected(&model, SelectionRule::SameBin, &f)?;
    let mu = res.mu.context("a term has no selected events")?;
    let mut rep = Report::new("lhv scale");
    rep.set("target", target)
        .set("table1_weight", (1.0 + target / 4.0) / 2.0)
        .set("ensemble_size", model.len())
        .set("terms", res.terms.iter().map(|t| t.value).collect::<Vec<_>>())
        .set("mu", mu)
        .set("selection_rate", res.selection_rate);
    rep.check_close("mu", mu, target, common.tol_or(1e-9));
    Ok(Output::Report(rep))
}

/// Exact probability that a trial is selected under the schedule.
fn exact_selection(model: &StrategyEnsemble<f64>, schedule: &SettingsSchedule) -> f64 {
    let n = model.n_parties();
    let tuples: Vec<Vec<u8>> = match schedule {
        SettingsSchedule::Uniform => (0..1usize << n)
            .map(|b| (0..n).map(|k| ((b >> (n - 1 - k)) & 1) as u8).collect())
            .collect(),
        SettingsSchedule::Cycle(list) => list.clone(),
        SettingsSchedule::Fixed(s) => vec![s.clone()],
    };
    let total: f64 = tuples
        .iter()
        .map(|s| {
            model
                .entries()
                .iter()
                .filter(|(st, _)| strategy_outcome(st, s, SelectionRule::SameBin).0)
                .map(|(_, w)| w)
                .sum::<f64>()
        })
        .sum();
    total / tuples.len() as f64
}

fn stream(common: &Common, model: Model, target: Option<f64>, schedule: ScheduleArg) -> anyhow::Result<Output> {
    let ensemble: StrategyEnsemble<f64> = match (model, target) {
        (Model::Table1, None) => table1_model().to_f64(),
        (Model::Table1, Some(_)) => bail!("--target applies to --model scaled"),
        (Model::Scaled, Some(t)) => scaled_model(t)?,
        (Model::Scaled, None) => bail!("--model scaled needs --target"),
    };
    let f = BellFunctional::mermin3();
    let sched = schedule.build(&f);
    let trials = usize::try_from(common.trials)?;
    let events = event_stream(&ensemble, SelectionRule::SameBin, &sched, trials, common.seed)?;
    if common.format == Format::Csv {
        let mut buf = Vec::new();
        write_events_csv(&events, &mut buf)?;
        return Ok(Output::Csv(buf));
    }
    let est = analyze_events(&events, &f)?;
    let exact_res = evaluate_postselected(&ensemble, SelectionRule::SameBin, &f)?;
    let exact_mu = exact_res.mu.context("a term has no selected weight")?;
    let exact_rate = exact_selection(&ensemble, &sched);
    let mut rep = Report::new("lhv stream");
    rep.set("model", format!("{model:?}").to_lowercase())
        .set("seed", common.seed)
        .set("estimate", &est)
        .set("exact_mu", exact_mu)
        .set("exact_selection_rate", exact_rate);
    let tol = common.tol_or(1e-9);
    match (est.mu_hat, est.mu_std_err) {
        (Some(mu), Some(se)) => {
            rep.check_close("mu_hat within 3 sigma", mu, exact_mu, (3.0 * se).max(tol));
        }
        _ => {
            rep.check_eq("every term sampled", false, true);
        }
    }
    rep.check_close(
        "selection rate within 3 sigma",
        est.selection_rate,
        exact_rate,
        (3.0 * (exact_rate * (1.0 - exact_rate) / est.trials as f64).sqrt()).max(tol),
    );
    Ok(Output::Report(rep))
}
