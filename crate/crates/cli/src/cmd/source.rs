use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Subcommand, ValueEnum};
use etbell_core::lhv::{event_stream, table1_model, SelectionRule};
use etbell_core::source::{
    analyze_events, coincidence_filter, four_photon_state, locality_audit, pair_agreement_rate,
    quantum_event_stream, read_events_csv, source_event_stream, write_events_csv, PumpConfig,
};
use etbell_core::states::{ghz_state, Alphabet, BellFunctional, MerminForm};

use super::ScheduleArg;
use crate::report::Report;
use crate::{Common, Format, Output};

#[derive(Debug, Subcommand)]
pub enum SourceCommand {
    /// The four-photon state of two independently emitted pairs
    State,
    /// Coincidence filtering with a short window
    Filter {
        #[command(flatten)]
        pump: PumpArgs,
    },
    /// Simulated four-party event stream
    Stream {
        #[command(flatten)]
        pump: PumpArgs,
        #[arg(long, value_enum, default_value_t = ScheduleArg::Uniform)]
        schedule: ScheduleArg,
    },
    /// Test whether selection depends on the local settings
    Audit {
        /// Event CSV to audit; generated from `--model` when absent
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = AuditModel::Quantum)]
        model: AuditModel,
        /// Family-wise significance level
        #[arg(long, default_value_t = 1e-3)]
        alpha: f64,
        /// Fail unless the audit reaches this verdict
        #[arg(long, value_enum)]
        expect: Option<Verdict>,
    },
}

#[derive(Debug, Clone, Copy, clap::Args)]
pub struct PumpArgs {
    /// Pump interferometer path difference
    #[arg(long, default_value_t = 1.0)]
    delta_t: f64,
    /// Coincidence window
    #[arg(long, default_value_t = 0.5)]
    window: f64,
}

impl PumpArgs {
    fn config(self) -> anyhow::Result<PumpConfig> {
        Ok(PumpConfig::new(self.delta_t, self.window)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AuditModel {
    /// Three-party crossed geometry with GHZ statistics
    Quantum,
    /// The setting-dependent local model in the unbalanced geometry
    Table1,
    /// Four-party two-pair source
    Source,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Verdict {
    Independent,
    Dependent,
}

pub fn run(common: &Common, command: &SourceCommand) -> anyhow::Result<Output> {
    let tol = common.tol_or(1e-12);
    match command {
        SourceCommand::State => state(tol),
        SourceCommand::Filter { pump } => filter(pump.config()?, tol),
        SourceCommand::Stream { pump, schedule } => stream(common, pump.config()?, *schedule),
        SourceCommand::Audit {
            input,
            model,
            alpha,
            expect,
        } => audit(common, input.as_ref(), *model, *alpha, *expect),
    }
}

fn state(tol: f64) -> anyhow::Result<Output> {
    let s = four_photon_state();
    let mut rep = Report::new("source state");
    rep.set("state", &s);
    let support = s.support();
    rep.check_eq("nonzero amplitudes", support.len(), 4);
    let worst = support.iter().map(|(_, z)| (z.re - 0.5).hypot(z.im)).fold(0.0, f64::max);
    rep.check_small("amplitudes equal 1/2", worst, tol);
    rep.check_close("norm", s.vector().norm_sqr(), 1.0, tol);
    let split: f64 = support
        .iter()
        .filter(|(l, _)| l[0] != l[1] || l[2] != l[3])
        .map(|(_, z)| z.norm_sqr())
        .sum();
    rep.check_small("pairs share a time bin", split, tol);
    Ok(Output::Report(rep))
}

fn filter(cfg: PumpConfig, tol: f64) -> anyhow::Result<Output> {
    let (f, keep) = coincidence_filter(&four_photon_state(), &cfg)?;
    let (ff, keep2) = coincidence_filter(&f, &cfg)?;
    let ghz = ghz_state(4)?.with_alphabet(Alphabet::Epoch)?;
    let mut rep = Report::new("source filter");
    rep.set("delta_t", cfg.delta_t())
        .set("window", cfg.window())
        .set("filtered", &f)
        .set("keep_probability", keep);
    rep.check_close("keep probability", keep, 0.5, tol);
    rep.check_small("filtered state is GHZ", f.max_abs_diff(&ghz)?, tol);
    rep.check_close("refilter keeps everything", keep2, 1.0, tol);
    rep.check_small("idempotent", ff.max_abs_diff(&f)?, tol);
    Ok(Output::Report(rep))
}

fn stream(common: &Common, cfg: PumpConfig, schedule: ScheduleArg) -> anyhow::Result<Output> {
    let f = BellFunctional::mermin(4, MerminForm::Product)?;
    let trials = usize::try_from(common.trials)?;
    let events = source_event_stream(&cfg, &schedule.build(&f), trials, common.seed)?;
    if common.format == Format::Csv {
        let mut buf = Vec::new();
        write_events_csv(&events, &mut buf)?;
        return Ok(Output::Csv(buf));
    }
    let est = analyze_events(&events, &f)?;
    let agreement = pair_agreement_rate(&events)?;
    let tol = common.tol_or(1e-9);
    let mut rep = Report::new("source stream");
    rep.set("seed", common.seed).set("pair_agreement", agreement).set("estimate", &est);
    rep.check_eq("pair agreement", agreement, 1.0);
    let sigma = (0.25 / est.trials as f64).sqrt();
    rep.check_close("selection rate within 3 sigma", est.selection_rate, 0.5, 3.0 * sigma);
    match (est.mu_hat, est.mu_std_err) {
        (Some(mu), Some(se)) => {
            rep.check_close("mu_hat within 3 sigma", mu, 8.0, (3.0 * se).max(tol));
        }
        _ => {
            rep.check_eq("every term sampled", false, true);
        }
    }
    Ok(Output::Report(rep))
}

fn audit(
    common: &Common,
    input: Option<&PathBuf>,
    model: AuditModel,
    alpha: f64,
    expect: Option<Verdict>,
) -> anyhow::Result<Output> {
    if !(alpha > 0.0 && alpha < 1.0) {
        bail!("--alpha must lie in (0, 1)");
    }
    let trials = usize::try_from(common.trials)?;
    let schedule = etbell_core::lhv::SettingsSchedule::Uniform;
    let (events, origin) = match input {
        Some(path) => {
            let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
            (read_events_csv(file)?, path.display().to_string())
        }
        None => {
            let ev = match model {
                AuditModel::Quantum => quantum_event_stream(3, &schedule, trials, common.seed)?,
                AuditModel::Table1 => {
                    event_stream(&table1_model(), SelectionRule::SameBin, &schedule, trials, common.seed)?
                }
                AuditModel::Source => {
                    source_event_stream(&PumpConfig::new(1.0, 0.5)?, &schedule, trials, common.seed)?
                }
            };
            (ev, format!("{model:?}").to_lowercase())
        }
    };
    let report = locality_audit(&events, alpha)?;
    let mut rep = Report::new("source audit");
    rep.set("stream", origin).set("seed", common.seed).set("audit", &report);
    if let Some(v) = expect {
        rep.check_eq(
            "verdict",
            if report.dependence_detected { "dependent" } else { "independent" },
            match v {
                Verdict::Dependent => "dependent",
                Verdict::Independent => "independent",
            },
        );
    }
    Ok(Output::Report(rep))
}
