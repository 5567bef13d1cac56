use anyhow::bail;
use clap::Args;
use etbell_core::lhv::classical_bound;
use etbell_core::numerics::{pauli, ComplexMatrix};
use etbell_core::states::{
    ghz_state, mabk_optimal_settings, mermin3, yx_settings, BellFunctional, Dichotomic, MerminForm, PartySettings,
};
use serde_json::json;

use super::FormArg;
use crate::report::Report;
use crate::{Common, Output};

#[derive(Debug, Args)]
pub struct MerminArgs {
    /// Per-party observables: `yx` (same pair for everyone), `xxx` (one
    /// observable per party for both settings) or `yx,yx,yx`
    #[arg(long)]
    pub settings: Option<String>,
    /// Polynomial for n ≠ 3 (default: mabk for n = 2, product otherwise)
    #[arg(long, value_enum)]
    pub form: Option<FormArg>,
}

fn parse_settings(text: &str, n: usize) -> anyhow::Result<(Vec<PartySettings>, Vec<[String; 2]>)> {
    let pairs: Vec<[char; 2]> = if text.contains(',') {
        text.split(',')
            .map(|p| {
                let ch: Vec<char> = p.trim().chars().collect();
                match ch[..] {
                    [a, b] => Ok([a, b]),
                    _ => bail!("setting pair {p:?} must be two letters"),
                }
            })
            .collect::<anyhow::Result<_>>()?
    } else {
        let ch: Vec<char> = text.chars().collect();
        match ch.len() {
            2 => vec![[ch[0], ch[1]]; n],
            len if len == n => ch.iter().map(|&c| [c, c]).collect(),
            _ => bail!("cannot read settings {text:?} for {n} parties"),
        }
    };
    if pairs.len() != n {
        bail!("{} setting pairs given for {n} parties", pairs.len());
    }
    let settings = pairs
        .iter()
        .map(|&[a, b]| Ok([Dichotomic::from_char(a)?, Dichotomic::from_char(b)?]))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let labels = pairs.iter().map(|p| p.map(|c| c.to_ascii_lowercase().to_string())).collect();
    Ok((settings, labels))
}

/// The four operators with eigenvalue −1 on the three-party GHZ state.
fn stabilizers() -> Vec<(&'static str, ComplexMatrix)> {
    let (x, y) = (pauli::x(), pauli::y());
    let k3 = |a: &ComplexMatrix, b: &ComplexMatrix, c: &ComplexMatrix| a.kron(b).kron(c);
    vec![
        ("XYY", k3(&x, &y, &y)),
        ("YXY", k3(&y, &x, &y)),
        ("YYX", k3(&y, &y, &x)),
        ("-XXX", k3(&x, &x, &x).scale((-1.0).into())),
    ]
}

pub fn run(common: &Common, args: &MerminArgs) -> anyhow::Result<Output> {
    let n = common.n.unwrap_or(3);
    if n < 2 {
        bail!("--n must be at least 2");
    }
    let tol = common.tol_or(1e-12);
    let form: MerminForm = args
        .form
        .unwrap_or(if n == 2 { FormArg::Mabk } else { FormArg::Product })
        .into();
    let state = ghz_state(n)?;
    let (settings, labels, default_settings) = match &args.settings {
        Some(text) => {
            let (s, l) = parse_settings(text, n)?;
            (s, json!(l), false)
        }
        None if form == MerminForm::Mabk && n != 3 => {
            let delta = -((n as f64) - 1.0) * std::f64::consts::FRAC_PI_4;
            let mut l = vec![json!(["x", "y"]); n];
            l[0] = json!([format!("equatorial({delta})"), format!("equatorial({})", delta + std::f64::consts::FRAC_PI_2)]);
            (mabk_optimal_settings(n), json!(l), true)
        }
        None => (yx_settings(n), json!(vec![["y", "x"]; n]), true),
    };

    let f = if n == 3 { BellFunctional::mermin3() } else { BellFunctional::mermin(n, form)? };
    let bound = classical_bound(&f);
    let mut r = Report::new("mermin-quantum");
    r.set("n", n).set("settings", labels).set("classical_bound", bound);
    let mu = if n == 3 {
        let res = mermin3(&state, &settings)?;
        r.set("form", "mermin3")
            .set(
                "terms",
                f.terms()
                    .iter()
                    .zip(res.terms)
                    .map(|(t, v)| json!({"settings": t.settings, "coeff": t.coeff, "value": v}))
                    .collect::<Vec<_>>(),
            )
            .set("mu", res.mu);
        for (name, op) in stabilizers() {
            let image = state.vector().apply(&op)?;
            let residual = image
                .amplitudes()
                .iter()
                .zip(state.amplitudes())
                .map(|(a, b)| (a + b).norm())
                .fold(0.0, f64::max);
            r.check_small(&format!("stabilizer {name} eigenvalue -1 residual"), residual, tol);
        }
        if default_settings {
            r.check_close("mu", res.mu, 4.0, tol);
        }
        res.mu
    } else {
        let corr = f.correlators(&state, &settings)?;
        let value: f64 = corr.iter().zip(f.terms()).map(|(e, t)| e * t.coeff).sum();
        r.set("form", form)
            .set(
                "terms",
                f.terms()
                    .iter()
                    .zip(&corr)
                    .map(|(t, v)| json!({"settings": t.settings, "coeff": t.coeff, "value": v}))
                    .collect::<Vec<_>>(),
            )
            .set("value", value)
            .set("mu", value.abs());
        if default_settings {
            let quantum = match form {
                MerminForm::Product => 2f64.powi(n as i32 - 1),
                MerminForm::Mabk => 2f64.powf((n as f64 + 1.0) / 2.0),
            };
            r.check_close("mu", value.abs(), quantum, tol);
        }
        value.abs()
    };
    r.set("violates_local_bound", mu > bound + tol);
    Ok(Output::Report(r))
}
