use std::path::{Path, PathBuf};

use anyhow::bail;
use clap::Subcommand;
use etbell_core::numerics::ComplexMatrix;
use etbell_core::optics::{
    analyzer, compose, dft_unitary, generation_cascade, measurement_basis, measurement_network, qutrit_analyzer,
    qutrit_analyzer_network, reck_decompose, InterferometerNetwork, QUTRIT_DFT_PHASES,
};
use serde_json::json;

use super::read_json;
use crate::report::Report;
use crate::{Common, Output};

/// Unitarity tolerance for matrices read from files.
const INPUT_UNITARY_TOL: f64 = 1e-9;

#[derive(Debug, Subcommand)]
pub enum NetworkCommand {
    /// N-point discrete Fourier transform
    Dft,
    /// Analyzer with phase shifts φ_2 … φ_N
    Analyzer {
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        phases: Vec<f64>,
    },
    /// Triangular-mesh decomposition of a unitary read from JSON
    Decompose {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Equal-splitting generation cascade
    Cascade,
    /// Compose a network from JSON (or the built-in ones) and check it
    Verify {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Matrix the network should compose to
        #[arg(long)]
        target: Option<PathBuf>,
    },
}

fn levels(common: &Common) -> anyhow::Result<usize> {
    let n = common.levels.or(common.n).unwrap_or(3);
    if n < 2 {
        bail!("need at least 2 modes");
    }
    Ok(n)
}

pub fn run(common: &Common, command: &NetworkCommand) -> anyhow::Result<Output> {
    let tol = common.tol_or(1e-12);
    let rep = match command {
        NetworkCommand::Dft => dft(levels(common)?, tol)?,
        NetworkCommand::Analyzer { phases } => analyzer_cmd(common, phases, tol)?,
        NetworkCommand::Decompose { input } => decompose(input, common.tol_or(1e-9))?,
        NetworkCommand::Cascade => cascade(levels(common)?, tol)?,
        NetworkCommand::Verify { input, target } => verify(common, input.as_ref(), target.as_ref())?,
    };
    Ok(Output::Report(rep))
}

fn dft(n: usize, tol: f64) -> anyhow::Result<Report> {
    let u = dft_unitary(n)?;
    let mut rep = Report::new("network dft");
    rep.set("n_modes", n).set("matrix", &u);
    rep.check_small("unitarity deviation", u.unitarity_deviation()?, tol);
    if n == 3 {
        let (a, b, g) = QUTRIT_DFT_PHASES;
        let net = qutrit_analyzer_network(a, b, g);
        rep.set("splitter_phases", json!({"alpha": a, "beta": b, "gamma": g}));
        rep.check_small("three-splitter network equals DFT", compose(&net).max_abs_diff(&u)?, tol);
    }
    Ok(rep)
}

fn analyzer_cmd(common: &Common, phases: &[f64], tol: f64) -> anyhow::Result<Report> {
    let n = phases.len() + 1;
    if let Some(given) = common.levels.or(common.n) {
        if given != n {
            bail!("{} phases given for {given} levels (expected {})", phases.len(), given - 1);
        }
    }
    let m = analyzer(n, phases)?;
    let basis = measurement_basis(n, phases)?;
    let mut rep = Report::new("network analyzer");
    rep.set("phases", phases).set("matrix", &m).set(
        "basis",
        basis
            .iter()
            .map(|b| b.amplitudes().iter().map(|z| [z.re, z.im]).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    );
    rep.check_small("unitarity deviation", m.unitarity_deviation()?, tol);
    let gram = basis
        .iter()
        .enumerate()
        .flat_map(|(i, a)| {
            basis.iter().enumerate().map(move |(j, b)| {
                let ip = a.inner(b).expect("same dimension");
                (ip.re - if i == j { 1.0 } else { 0.0 }).hypot(ip.im)
            })
        })
        .fold(0.0, f64::max);
    rep.check_small("basis orthonormality", gram, tol);
    let net = measurement_network(n, phases)?;
    rep.set("network", &net);
    rep.check_small("mesh composes to analyzer", compose(&net).max_abs_diff(&m)?, common.tol_or(1e-9));
    if n == 3 {
        let (a, b, g) = QUTRIT_DFT_PHASES;
        let q = qutrit_analyzer(a, b, g, phases[0], phases[1]);
        rep.check_small("three-splitter analyzer", q.max_abs_diff(&m)?, tol);
    }
    Ok(rep)
}

fn decompose(input: &Path, tol: f64) -> anyhow::Result<Report> {
    let u: ComplexMatrix = read_json(input)?;
    if !u.is_square() {
        bail!("input matrix is {}x{}, not square", u.rows(), u.cols());
    }
    let dev = u.unitarity_deviation()?;
    if dev > INPUT_UNITARY_TOL {
        bail!("input matrix is not unitary (deviation {dev:e})");
    }
    let d = reck_decompose(&u, 1e-12)?;
    let err = d.round_trip_error(&u)?;
    let mut rep = Report::new("network decompose");
    rep.set("input_unitarity_deviation", dev)
        .set("beam_splitters", d.network.len())
        .set("network", &d.network)
        .set("output_phases", &d.output_phases)
        .set("round_trip_error", err);
    rep.check_small("round trip", err, tol);
    Ok(rep)
}

fn cascade(n: usize, tol: f64) -> anyhow::Result<Report> {
    let net = generation_cascade(n)?;
    let amps = net.propagate(0)?;
    let moduli: Vec<f64> = amps.iter().map(|z| z.norm()).collect();
    let target = 1.0 / (n as f64).sqrt();
    let mut rep = Report::new("network cascade");
    rep.set("n_modes", n)
        .set("network", &net)
        .set("reflectivities", net.reflectivities())
        .set("output_moduli", &moduli);
    let worst = moduli.iter().map(|m| (m - target).abs()).fold(0.0, f64::max);
    rep.check_small("output moduli equal 1/sqrt(n)", worst, tol);
    if n == 3 {
        let r = net.reflectivities();
        rep.check_close("first reflectivity", r[0], 1.0 / 3.0, tol);
        rep.check_close("second reflectivity", r[1], 0.5, tol);
    }
    Ok(rep)
}

fn verify(common: &Common, input: Option<&PathBuf>, target: Option<&PathBuf>) -> anyhow::Result<Report> {
    let tol = common.tol_or(1e-9);
    let mut rep = Report::new("network verify");
    match input {
        Some(path) => {
            let net: InterferometerNetwork = read_json(path)?;
            let u = compose(&net);
            rep.set("n_modes", net.n_modes()).set("elements", net.len()).set("matrix", &u);
            rep.check_small("unitarity deviation", u.unitarity_deviation()?, tol);
            if let Some(t) = target {
                let want: ComplexMatrix = read_json(t)?;
                rep.check_small("matches target", u.max_abs_diff(&want)?, tol);
            }
        }
        None => {
            if target.is_some() {
                bail!("--target needs --in");
            }
            let n = levels(common)?;
            let zeros = vec![0.0; n - 1];
            let mesh = measurement_network(n, &zeros)?;
            let dft = dft_unitary(n)?;
            rep.set("n_modes", n).set("mesh_elements", mesh.len());
            rep.check_small("measurement mesh equals DFT", compose(&mesh).max_abs_diff(&dft)?, tol);
            let d = reck_decompose(&dft, 1e-12)?;
            rep.check_small("DFT round trip", d.round_trip_error(&dft)?, tol);
            let cascade = generation_cascade(n)?;
            rep.check_small("cascade unitarity", compose(&cascade).unitarity_deviation()?, tol);
            if n == 3 {
                let (a, b, g) = QUTRIT_DFT_PHASES;
                rep.check_small(
                    "three-splitter network equals DFT",
                    compose(&qutrit_analyzer_network(a, b, g)).max_abs_diff(&dft)?,
                    tol,
                );
            }
        }
    }
    Ok(rep)
}
