pub mod lhv;
pub mod mermin;
pub mod network;
pub mod source;

use std::path::Path;

use anyhow::Context;
use clap::ValueEnum;
use etbell_core::lhv::SettingsSchedule;
use etbell_core::states::{BellFunctional, MerminForm};
use serde::de::DeserializeOwned;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormArg {
    Mabk,
    Product,
}

impl From<FormArg> for MerminForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Mabk => MerminForm::Mabk,
            FormArg::Product => MerminForm::Product,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    /// Independent fair coin per party
    Uniform,
    /// Uniform over the functional's terms
    Terms,
}

impl ScheduleArg {
    pub fn build(self, functional: &BellFunctional) -> SettingsSchedule {
        match self {
            ScheduleArg::Uniform => SettingsSchedule::Uniform,
            ScheduleArg::Terms => {
                SettingsSchedule::Cycle(functional.terms().iter().map(|t| t.settings.clone()).collect())
            }
        }
    }
}

/// The three-party functional for `n = 3`, otherwise the requested form.
pub fn functional_for(n: usize, form: Option<FormArg>) -> anyhow::Result<BellFunctional> {
    Ok(match (n, form) {
        (3, None) => BellFunctional::mermin3(),
        (_, f) => BellFunctional::mermin(n, f.unwrap_or(FormArg::Product).into())?,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
