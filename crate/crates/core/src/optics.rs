//! Beam-splitter and phase-shifter networks acting on labeled optical modes.
//!
//! Two-mode beam splitters follow a single sign convention: on modes `(i, j)`
//! with reflectivity `R` and phase `φ` the active block is
//!
//! ```text
//! ⎡ √(1−R)   e^{iφ}√R      ⎤
//! ⎣ √R      −e^{iφ}√(1−R)  ⎦
//! ```
//!
//! Networks list their elements in propagation order, so the composed unitary
//! is the product with the first element on the right.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{c, cis, ComplexMatrix, StateVector, C64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ElementRepr", into = "ElementRepr")]
pub enum OpticalElement {
    BeamSplitter {
        modes: (usize, usize),
        reflectivity: f64,
        phase: f64,
    },
    PhaseShifter {
        mode: usize,
        phase: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ElementKind {
    BeamSplitter,
    PhaseShifter,
}

#[derive(Serialize, Deserialize)]
struct ElementRepr {
    kind: ElementKind,
    modes: Vec<usize>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    reflectivity: Option<f64>,
    #[serde(default)]
    phase: f64,
}

impl TryFrom<ElementRepr> for OpticalElement {
    type Error = Error;

    fn try_from(repr: ElementRepr) -> Result<Self> {
        if !repr.phase.is_finite() {
            return Err(Error::NonFinite("element phase"));
        }
        match (repr.kind, repr.modes.as_slice()) {
            (ElementKind::BeamSplitter, &[i, j]) => {
                let r = repr
                    .reflectivity
                    .ok_or_else(|| Error::Parse("beam_splitter requires R".into()))?;
                OpticalElement::beam_splitter(i, j, r, repr.phase)
            }
            (ElementKind::PhaseShifter, &[m]) => Ok(OpticalElement::phase_shifter(m, repr.phase)),
            (kind, modes) => Err(Error::Parse(format!(
                "{kind:?} cannot act on {} mode(s)",
                modes.len()
            ))),
        }
    }
}

impl From<OpticalElement> for ElementRepr {
    fn from(el: OpticalElement) -> Self {
        match el {
            OpticalElement::BeamSplitter {
                modes: (i, j),
                reflectivity,
                phase,
            } => ElementRepr {
                kind: ElementKind::BeamSplitter,
                modes: vec![i, j],
                reflectivity: Some(reflectivity),
                phase,
            },
            OpticalElement::PhaseShifter { mode, phase } => ElementRepr {
                kind: ElementKind::PhaseShifter,
                modes: vec![mode],
                reflectivity: None,
                phase,
            },
        }
    }
}

impl OpticalElement {
    pub fn beam_splitter(i: usize, j: usize, reflectivity: f64, phase: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&reflectivity) {
            return Err(Error::InvalidReflectivity(reflectivity));
        }
        if i == j {
            return Err(Error::ModeCollision(i));
        }
        if !phase.is_finite() {
            return Err(Error::NonFinite("element phase"));
        }
        Ok(OpticalElement::BeamSplitter {
            modes: (i, j),
            reflectivity,
            phase,
        })
    }

    pub fn phase_shifter(mode: usize, phase: f64) -> Self {
        OpticalElement::PhaseShifter { mode, phase }
    }

    fn max_mode(&self) -> usize {
        match *self {
            OpticalElement::BeamSplitter { modes: (i, j), .. } => i.max(j),
            OpticalElement::PhaseShifter { mode, .. } => mode,
        }
    }

    /// Full `n × n` unitary of this element.
    pub fn unitary(&self, n: usize) -> Result<ComplexMatrix> {
        if self.max_mode() >= n {
            return Err(Error::ModeOutOfRange {
                mode: self.max_mode(),
                n_modes: n,
            });
        }
        let mut rows = identity_rows(n);
        self.apply_left(&mut rows);
        ComplexMatrix::from_rows(rows)
    }

    /// Left-multiplies `rows` (a row-major matrix) by this element in place.
    fn apply_left(&self, rows: &mut [Vec<C64>]) {
        match *self {
            OpticalElement::BeamSplitter {
                modes: (i, j),
                reflectivity,
                phase,
            } => {
                let t = (1.0 - reflectivity).sqrt();
                let r = reflectivity.sqrt();
                let e = cis(phase);
                for k in 0..rows[i].len() {
                    let a = rows[i][k];
                    let b = rows[j][k];
                    rows[i][k] = a * t + e * r * b;
                    rows[j][k] = a * r - e * t * b;
                }
            }
            OpticalElement::PhaseShifter { mode, phase } => {
                let e = cis(phase);
                rows[mode].iter_mut().for_each(|z| *z *= e);
            }
        }
    }
}

fn identity_rows(n: usize) -> Vec<Vec<C64>> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) })
                .collect()
        })
        .collect()
}

/// Ordered optical elements on `n_modes` modes.
///
/// JSON layout: `{"n_modes": n, "elements": [{kind, modes, R, phase}, ...]}`.
/// A bare element list is also accepted on input, with the mode count taken
/// from the largest index used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkRepr")]
pub struct InterferometerNetwork {
    n_modes: usize,
    elements: Vec<OpticalElement>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NetworkRepr {
    Full {
        n_modes: usize,
        elements: Vec<OpticalElement>,
    },
    List(Vec<OpticalElement>),
}

impl TryFrom<NetworkRepr> for InterferometerNetwork {
    type Error = Error;

    fn try_from(repr: NetworkRepr) -> Result<Self> {
        match repr {
            NetworkRepr::Full { n_modes, elements } => InterferometerNetwork::new(n_modes, elements),
            NetworkRepr::List(elements) => {
                let n_modes = elements.iter().map(|e| e.max_mode() + 1).max().unwrap_or(0);
                InterferometerNetwork::new(n_modes, elements)
            }
        }
    }
}

impl InterferometerNetwork {
    pub fn new(n_modes: usize, elements: Vec<OpticalElement>) -> Result<Self> {
        if let Some(bad) = elements.iter().find(|e| e.max_mode() >= n_modes) {
            return Err(Error::ModeOutOfRange {
                mode: bad.max_mode(),
                n_modes,
            });
        }
        Ok(Self { n_modes, elements })
    }

    pub fn empty(n_modes: usize) -> Self {
        Self {
            n_modes,
            elements: Vec::new(),
        }
    }

    pub fn push(&mut self, element: OpticalElement) -> Result<()> {
        if element.max_mode() >= self.n_modes {
            return Err(Error::ModeOutOfRange {
                mode: element.max_mode(),
                n_modes: self.n_modes,
            });
        }
        self.elements.push(element);
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn elements(&self) -> &[OpticalElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Reflectivities of the beam splitters in propagation order.
    pub fn reflectivities(&self) -> Vec<f64> {
        self.elements
            .iter()
            .filter_map(|e| match e {
                OpticalElement::BeamSplitter { reflectivity, .. } => Some(*reflectivity),
                OpticalElement::PhaseShifter { .. } => None,
            })
            .collect()
    }

    /// Output amplitudes for a single photon entering `input_mode`.
    pub fn propagate(&self, input_mode: usize) -> Result<Vec<C64>> {
        if input_mode >= self.n_modes {
            return Err(Error::ModeOutOfRange {
                mode: input_mode,
                n_modes: self.n_modes,
            });
        }
        Ok(compose(self).column(input_mode))
    }
}

/// Beam-splitter unitary on `n` modes with its active block on `modes`.
pub fn bs_unitary(reflectivity: f64, phase: f64, modes: (usize, usize), n: usize) -> Result<ComplexMatrix> {
    OpticalElement::beam_splitter(modes.0, modes.1, reflectivity, phase)?.unitary(n)
}

/// Composed unitary of a network (`U_last ⋯ U_first`).
pub fn compose(net: &InterferometerNetwork) -> ComplexMatrix {
    let mut rows = identity_rows(net.n_modes);
    for el in &net.elements {
        el.apply_left(&mut rows);
    }
    ComplexMatrix::from_fn(net.n_modes, net.n_modes, |i, j| rows[i][j])
}

/// The three-splitter qutrit analyzer with phases `α, β, γ` on its splitters.
pub fn qutrit_analyzer_network(alpha: f64, beta: f64, gamma: f64) -> InterferometerNetwork {
    InterferometerNetwork {
        n_modes: 3,
        elements: vec![
            OpticalElement::BeamSplitter {
                modes: (1, 2),
                reflectivity: 0.5,
                phase: alpha,
            },
            OpticalElement::BeamSplitter {
                modes: (0, 2),
                reflectivity: 1.0 / 3.0,
                phase: beta,
            },
            OpticalElement::BeamSplitter {
                modes: (0, 1),
                reflectivity: 0.5,
                phase: gamma,
            },
        ],
    }
}

/// Splitter phases `(α, β, γ)` at which the qutrit analyzer equals the 3-point DFT.
pub const QUTRIT_DFT_PHASES: (f64, f64, f64) = (PI / 3.0, PI / 3.0, -PI / 6.0);

/// Qutrit analyzer with input phase shifts `−φ2, −φ3` on modes 2 and 3.
pub fn qutrit_analyzer(alpha: f64, beta: f64, gamma: f64, phi2: f64, phi3: f64) -> ComplexMatrix {
    let mut net = InterferometerNetwork::empty(3);
    net.elements.push(OpticalElement::phase_shifter(1, -phi2));
    net.elements.push(OpticalElement::phase_shifter(2, -phi3));
    net.elements
        .extend(qutrit_analyzer_network(alpha, beta, gamma).elements);
    compose(&net)
}

/// `N`-point DFT unitary, entries `ω^{jk}/√N` with `ω = e^{2πi/N}` (0-based `j, k`).
pub fn dft_unitary(n: usize) -> Result<ComplexMatrix> {
    if n < 2 {
        return Err(Error::TooSmall {
            what: "DFT dimension",
            min: 2,
            got: n,
        });
    }
    let norm = 1.0 / (n as f64).sqrt();
    Ok(ComplexMatrix::from_fn(n, n, |j, k| {
        // reduce the exponent first so large N keeps full phase accuracy
        let e = (j * k) % n;
        cis(2.0 * PI * e as f64 / n as f64) * norm
    }))
}

fn check_phis(n: usize, phis: &[f64]) -> Result<()> {
    if n < 2 {
        return Err(Error::TooSmall {
            what: "analyzer dimension",
            min: 2,
            got: n,
        });
    }
    if phis.len() != n - 1 {
        return Err(Error::LengthMismatch {
            expected: n - 1,
            found: phis.len(),
        });
    }
    if phis.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("analyzer phases"));
    }
    Ok(())
}

/// Analyzer matrix `DFT_N · diag(1, e^{−iφ_2}, …, e^{−iφ_N})`.
pub fn analyzer(n: usize, phis: &[f64]) -> Result<ComplexMatrix> {
    check_phis(n, phis)?;
    let dft = dft_unitary(n)?;
    Ok(ComplexMatrix::from_fn(n, n, |j, k| {
        let phase = if k == 0 { 0.0 } else { -phis[k - 1] };
        dft.get(j, k) * cis(phase)
    }))
}

/// Level labels `"1"`, …, `"N"`.
pub fn level_labels(n: usize) -> Vec<String> {
    (1..=n).map(|k| k.to_string()).collect()
}

/// Projected measurement basis `|k'⟩ = N^{-1/2} Σ_j ω̄^{(k−1)(j−1)} e^{iφ_j} |j⟩`, with `φ_1 = 0`.
pub fn measurement_basis(n: usize, phis: &[f64]) -> Result<Vec<StateVector>> {
    check_phis(n, phis)?;
    let norm = 1.0 / (n as f64).sqrt();
    let labels = level_labels(n);
    (0..n)
        .map(|k| {
            let amps = (0..n)
                .map(|j| {
                    let phi = if j == 0 { 0.0 } else { phis[j - 1] };
                    let e = (k * j) % n;
                    cis(-2.0 * PI * e as f64 / n as f64 + phi) * norm
                })
                .collect();
            StateVector::new(amps, labels.clone())
        })
        .collect()
}

/// Equal-splitting chain: splitter `k` (1-based) couples mode 0 to mode `k`
/// with reflectivity `1/(n−k+1)`, so a photon in mode 0 leaves in all `n`
/// modes with amplitude `1/√n`.
pub fn generation_cascade(n: usize) -> Result<InterferometerNetwork> {
    if n < 2 {
        return Err(Error::TooSmall {
            what: "cascade size",
            min: 2,
            got: n,
        });
    }
    let elements = (1..n)
        .map(|k| OpticalElement::BeamSplitter {
            modes: (0, k),
            reflectivity: 1.0 / (n - k + 1) as f64,
            phase: 0.0,
        })
        .collect();
    Ok(InterferometerNetwork { n_modes: n, elements })
}

/// A triangular mesh together with the output phases it leaves over:
/// `U = diag(e^{iθ_k}) · compose(network)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReckDecomposition {
    pub network: InterferometerNetwork,
    pub output_phases: Vec<f64>,
}

impl ReckDecomposition {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let mesh = compose(&self.network);
        ComplexMatrix::from_fn(mesh.rows(), mesh.cols(), |i, j| {
            cis(self.output_phases[i]) * mesh.get(i, j)
        })
    }

    /// Max entry error of the reconstruction against `target`.
    pub fn round_trip_error(&self, target: &ComplexMatrix) -> Result<f64> {
        self.reconstruct().max_abs_diff(target)
    }

    /// The mesh followed by phase shifters realizing the output phases.
    pub fn to_network(&self) -> InterferometerNetwork {
        let mut net = self.network.clone();
        for (mode, &phase) in self.output_phases.iter().enumerate() {
            if phase != 0.0 {
                net.elements.push(OpticalElement::phase_shifter(mode, phase));
            }
        }
        net
    }
}

/// Decomposes a unitary into nearest-neighbour beam splitters.
///
/// Entries below the diagonal are nulled row by row from the bottom,
/// right-multiplying by inverse splitters on adjacent columns `(c, c+1)`.
/// The leftover diagonal is returned as `output_phases`.
pub fn reck_decompose(u: &ComplexMatrix, tol: f64) -> Result<ReckDecomposition> {
    let deviation = u.unitarity_deviation()?;
    if deviation > tol {
        return Err(Error::NotUnitary { deviation, tol });
    }
    let n = u.rows();
    let mut work: Vec<Vec<C64>> = (0..n).map(|i| u.row(i).to_vec()).collect();
    let mut elements = Vec::with_capacity(n * n.saturating_sub(1) / 2);

    for row in (1..n).rev() {
        for col in 0..row {
            let (a, b) = (col, col + 1);
            let x = work[row][a];
            let y = work[row][b];
            if x.norm() <= 1e-15 {
                continue;
            }
            let (reflectivity, phase) = if y.norm() <= 1e-15 {
                (1.0, 0.0)
            } else {
                let (xn, yn) = (x.norm_sqr(), y.norm_sqr());
                (xn / (xn + yn), (-y / x).arg())
            };
            let t = (1.0 - reflectivity).sqrt();
            let r = reflectivity.sqrt();
            let e_conj = cis(-phase);
            // work ← work · T†
            for w in work.iter_mut() {
                let (p, q) = (w[a], w[b]);
                w[a] = p * t + q * e_conj * r;
                w[b] = p * r - q * e_conj * t;
            }
            work[row][a] = c(0.0, 0.0);
            elements.push(OpticalElement::BeamSplitter {
                modes: (a, b),
                reflectivity,
                phase,
            });
        }
    }

    let output_phases = (0..n).map(|i| work[i][i].arg()).collect();
    Ok(ReckDecomposition {
        network: InterferometerNetwork { n_modes: n, elements },
        output_phases,
    })
}

/// Network realizing `analyzer(n, phis)` exactly: input phase shifters, a
/// triangular mesh for the DFT, then the residual output phases.
pub fn measurement_network(n: usize, phis: &[f64]) -> Result<InterferometerNetwork> {
    check_phis(n, phis)?;
    let mut net = InterferometerNetwork::empty(n);
    for (k, &phi) in phis.iter().enumerate() {
        net.elements.push(OpticalElement::phase_shifter(k + 1, -phi));
    }
    let mesh = reck_decompose(&dft_unitary(n)?, 1e-10)?;
    net.elements.extend(mesh.to_network().elements);
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::pauli;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const S2: f64 = std::f64::consts::SQRT_2;

    fn s3() -> f64 {
        3f64.sqrt()
    }

    fn close(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) {
        let d = a.max_abs_diff(b).unwrap();
        assert!(d <= tol, "max diff {d:e} > {tol:e}\n{a:?}\n{b:?}");
    }

    fn bs1(alpha: f64) -> ComplexMatrix {
        let e = cis(alpha);
        ComplexMatrix::from_rows(vec![
            vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            vec![c(0.0, 0.0), c(1.0 / S2, 0.0), e / S2],
            vec![c(0.0, 0.0), c(1.0 / S2, 0.0), -e / S2],
        ])
        .unwrap()
    }

    fn bs2(beta: f64) -> ComplexMatrix {
        let e = cis(beta);
        ComplexMatrix::from_rows(vec![
            vec![c(S2 / s3(), 0.0), c(0.0, 0.0), e / s3()],
            vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
            vec![c(1.0 / s3(), 0.0), c(0.0, 0.0), -e * S2 / s3()],
        ])
        .unwrap()
    }

    fn bs3(gamma: f64) -> ComplexMatrix {
        let e = cis(gamma);
        ComplexMatrix::from_rows(vec![
            vec![c(1.0 / S2, 0.0), e / S2, c(0.0, 0.0)],
            vec![c(1.0 / S2, 0.0), -e / S2, c(0.0, 0.0)],
            vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
        ])
        .unwrap()
    }

    #[test]
    fn beam_splitters_match_printed_analyzer_matrices() {
        for &p in &[0.0, 0.7, -2.1] {
            close(&bs_unitary(0.5, p, (1, 2), 3).unwrap(), &bs1(p), 1e-15);
            close(&bs_unitary(1.0 / 3.0, p, (0, 2), 3).unwrap(), &bs2(p), 1e-15);
            close(&bs_unitary(0.5, p, (0, 1), 3).unwrap(), &bs3(p), 1e-15);
        }
    }

    #[test]
    fn zero_reflectivity_does_not_mix_modes() {
        // the convention puts −e^{iφ} on the transmitted amplitude of mode j
        let u = bs_unitary(0.0, 0.0, (0, 2), 4).unwrap();
        let expected = ComplexMatrix::diagonal(&[c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0)]).unwrap();
        close(&u, &expected, 0.0);
    }

    #[test]
    fn bs_unitary_rejects_bad_input() {
        assert!(matches!(bs_unitary(1.5, 0.0, (0, 1), 2), Err(Error::InvalidReflectivity(_))));
        assert!(matches!(bs_unitary(-0.1, 0.0, (0, 1), 2), Err(Error::InvalidReflectivity(_))));
        assert!(matches!(bs_unitary(0.5, 0.0, (1, 1), 2), Err(Error::ModeCollision(1))));
        assert!(matches!(
            bs_unitary(0.5, 0.0, (0, 3), 2),
            Err(Error::ModeOutOfRange { mode: 3, n_modes: 2 })
        ));
    }

    #[test]
    fn block_amplitudes_are_balanced() {
        for &r in &[0.0, 0.2, 1.0 / 3.0, 0.5, 0.99, 1.0] {
            let u = bs_unitary(r, 1.3, (0, 1), 2).unwrap();
            for col in 0..2 {
                let p: f64 = u.column(col).iter().map(|z| z.norm_sqr()).sum();
                assert_abs_diff_eq!(p, 1.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn empty_network_composes_to_identity() {
        close(&compose(&InterferometerNetwork::empty(4)), &ComplexMatrix::identity(4), 0.0);
    }

    #[test]
    fn zero_phase_analyzer_first_column_is_uniform() {
        // hand product of the three printed splitters at α = β = γ = 0
        let m = compose(&qutrit_analyzer_network(0.0, 0.0, 0.0));
        for z in m.column(0) {
            assert_abs_diff_eq!(z.re, 1.0 / s3(), epsilon = 1e-15);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-15);
        }
        let hand = bs3(0.0).matmul(&bs2(0.0)).unwrap().matmul(&bs1(0.0)).unwrap();
        close(&m, &hand, 1e-15);
    }

    #[test]
    fn analyzer_at_dft_phases_is_dft3() {
        let (a, b, g) = QUTRIT_DFT_PHASES;
        let m = compose(&qutrit_analyzer_network(a, b, g));
        close(&m, &dft_unitary(3).unwrap(), 1e-12);
        let w = cis(2.0 * PI / 3.0);
        // printed form carries ω^4 in the corner; compare by value
        assert_abs_diff_eq!((m.get(2, 2) - w.powu(4) / s3()).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn qutrit_analyzer_with_zero_phases_is_dft3() {
        let (a, b, g) = QUTRIT_DFT_PHASES;
        close(&qutrit_analyzer(a, b, g, 0.0, 0.0), &dft_unitary(3).unwrap(), 1e-12);
    }

    #[test]
    fn qutrit_analyzer_rows_shift_cyclically() {
        // entry (r, k) = ω^{rk} e^{-iφ_k}/√3 with φ_k = 2πk/3 gives ω^{(r-1)k}
        let (a, b, g) = QUTRIT_DFT_PHASES;
        let m = qutrit_analyzer(a, b, g, 2.0 * PI / 3.0, 4.0 * PI / 3.0);
        let dft = dft_unitary(3).unwrap();
        for r in 0..3 {
            for k in 0..3 {
                let old = dft.get((r + 2) % 3, k);
                assert_abs_diff_eq!((m.get(r, k) - old).norm(), 0.0, epsilon = 1e-12);
            }
        }
        assert!(m.is_unitary(1e-12).unwrap());
    }

    #[test]
    fn dft_small_cases() {
        let h = 1.0 / S2;
        let d2 = ComplexMatrix::from_rows(vec![vec![c(h, 0.0), c(h, 0.0)], vec![c(h, 0.0), c(-h, 0.0)]]).unwrap();
        close(&dft_unitary(2).unwrap(), &d2, 1e-15);

        let d5 = dft_unitary(5).unwrap();
        assert!(d5.is_unitary(1e-12).unwrap());
        let w = cis(2.0 * PI / 5.0);
        // 1-based entry (3,3) = ω^{2·2}/√5
        assert_abs_diff_eq!((d5.get(2, 2) - w.powu(4) / 5f64.sqrt()).norm(), 0.0, epsilon = 1e-14);

        assert!(matches!(dft_unitary(1), Err(Error::TooSmall { .. })));
    }

    #[test]
    fn measurement_basis_zero_phases() {
        let basis = measurement_basis(3, &[0.0, 0.0]).unwrap();
        for z in basis[0].amplitudes() {
            assert_abs_diff_eq!((z - c(1.0 / s3(), 0.0)).norm(), 0.0, epsilon = 1e-15);
        }
        let expected = [c(1.0, 0.0), cis(-2.0 * PI / 3.0), cis(-4.0 * PI / 3.0)];
        for (z, e) in basis[1].amplitudes().iter().zip(expected) {
            assert_abs_diff_eq!((z - e / s3()).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn measurement_basis_length_mismatch() {
        assert!(matches!(
            measurement_basis(4, &[0.1, 0.2]),
            Err(Error::LengthMismatch { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn projection_matches_analyzer_rows() {
        let phis = [0.4, -1.1, 2.5];
        let basis = measurement_basis(4, &phis).unwrap();
        let a = analyzer(4, &phis).unwrap();
        let s = StateVector::new(
            vec![c(0.1, 0.3), c(-0.5, 0.2), c(0.7, 0.0), c(0.0, -0.3)],
            level_labels(4),
        )
        .unwrap();
        let projected = a.mul_vec(s.amplitudes()).unwrap();
        for (k, v) in basis.iter().enumerate() {
            assert_abs_diff_eq!((v.inner(&s).unwrap() - projected[k]).norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn cascade_reflectivities() {
        let net = generation_cascade(3).unwrap();
        assert_eq!(net.reflectivities(), vec![1.0 / 3.0, 0.5]);
        let net2 = generation_cascade(2).unwrap();
        assert_eq!(net2.reflectivities(), vec![0.5]);
        assert!(generation_cascade(1).is_err());
    }

    #[test]
    fn cascade_splits_equally() {
        let out = generation_cascade(6).unwrap().propagate(0).unwrap();
        for z in out {
            assert_abs_diff_eq!(z.norm(), 1.0 / 6f64.sqrt(), epsilon = 1e-14);
        }
    }

    #[test]
    fn reck_identity_is_empty() {
        let d = reck_decompose(&ComplexMatrix::identity(5), 1e-10).unwrap();
        assert!(d.network.is_empty());
        assert!(d.output_phases.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn reck_rejects_non_unitary() {
        let ones = ComplexMatrix::from_fn(3, 3, |_, _| c(1.0, 0.0));
        assert!(matches!(reck_decompose(&ones, 1e-10), Err(Error::NotUnitary { .. })));
    }

    #[test]
    fn reck_round_trips() {
        let dft = dft_unitary(3).unwrap();
        let d = reck_decompose(&dft, 1e-10).unwrap();
        assert!(d.round_trip_error(&dft).unwrap() <= 1e-9);
        assert_eq!(d.network.len(), 3);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = crate::numerics::random_unitary(4, &mut rng);
        let d = reck_decompose(&u, 1e-10).unwrap();
        assert!(d.round_trip_error(&u).unwrap() <= 1e-9);
        close(&compose(&d.to_network()), &u, 1e-9);

        let x = pauli::x();
        let d = reck_decompose(&x, 1e-10).unwrap();
        assert!(d.round_trip_error(&x).unwrap() <= 1e-12);
    }

    #[test]
    fn measurement_network_realizes_analyzer() {
        let phis = [0.3, 1.7, -0.4, 2.2];
        let net = measurement_network(5, &phis).unwrap();
        close(&compose(&net), &analyzer(5, &phis).unwrap(), 1e-10);
    }

    #[test]
    fn network_json() {
        let net = qutrit_analyzer_network(0.25, 0.5, 0.0);
        let json = serde_json::to_string(&net).unwrap();
        assert!(json.starts_with(r#"{"n_modes":3,"elements":[{"kind":"beam_splitter","modes":[1,2],"R":0.5,"phase":0.25}"#));
        let back: InterferometerNetwork = serde_json::from_str(&json).unwrap();
        assert_eq!(back, net);

        let list = r#"[{"kind":"phase_shifter","modes":[2],"phase":1.0},{"kind":"beam_splitter","modes":[0,1],"R":0.5,"phase":0}]"#;
        let parsed: InterferometerNetwork = serde_json::from_str(list).unwrap();
        assert_eq!(parsed.n_modes(), 3);
        assert_eq!(parsed.len(), 2);

        for bad in [
            r#"[{"kind":"beam_splitter","modes":[0,1],"R":1.5,"phase":0}]"#,
            r#"[{"kind":"beam_splitter","modes":[0,0],"R":0.5,"phase":0}]"#,
            r#"[{"kind":"beam_splitter","modes":[0,1],"phase":0}]"#,
            r#"[{"kind":"phase_shifter","modes":[0,1],"phase":0}]"#,
            r#"{"n_modes":2,"elements":[{"kind":"phase_shifter","modes":[4],"phase":0}]}"#,
        ] {
            assert!(serde_json::from_str::<InterferometerNetwork>(bad).is_err(), "{bad}");
        }
    }
}
