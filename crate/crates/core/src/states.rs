//! Multiparty states, local observables and Mermin-type functionals.
//!
//! Product-basis index order puts party 0 most significant, matching the
//! Kronecker order `O_0 ⊗ O_1 ⊗ …`. Time-bin qubits use `S ↦ level 1` and
//! `L ↦ level 2`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{c, pauli, ComplexMatrix, StateVector, C64, DEFAULT_TOL};
use crate::optics::{generation_cascade, InterferometerNetwork, OpticalElement};

/// Tolerance on the imaginary part of an expectation value.
pub const EXPECTATION_IMAG_TOL: f64 = 1e-12;

/// Per-party symbol set used to label basis states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alphabet {
    /// `S`, `L`
    TimeBin,
    /// `t0`, `t1`
    Epoch,
    /// `1`, `2`, …
    Level,
}

impl Alphabet {
    pub fn symbol(self, level: usize) -> String {
        match self {
            Alphabet::TimeBin => ["S", "L"].get(level).map_or_else(|| format!("?{level}"), |s| s.to_string()),
            Alphabet::Epoch => format!("t{level}"),
            Alphabet::Level => (level + 1).to_string(),
        }
    }

    fn max_dim(self) -> Option<usize> {
        match self {
            Alphabet::TimeBin | Alphabet::Epoch => Some(2),
            Alphabet::Level => None,
        }
    }

    fn separator(self, dims: &[usize]) -> &'static str {
        match self {
            Alphabet::Level if dims.iter().any(|&d| d > 9) => ",",
            _ => "",
        }
    }

    fn parse_label(self, label: &str, dims: &[usize]) -> Result<Vec<usize>> {
        let bad = || Error::Parse(format!("bad basis label {label:?}"));
        let tokens: Vec<String> = match (self, self.separator(dims)) {
            (Alphabet::Epoch, _) => {
                if label.len() != 2 * dims.len() || !label.is_ascii() {
                    return Err(bad());
                }
                (0..dims.len()).map(|k| label[2 * k..2 * k + 2].to_string()).collect()
            }
            (_, ",") => label.split(',').map(str::to_string).collect(),
            _ => label.chars().map(|ch| ch.to_string()).collect(),
        };
        if tokens.len() != dims.len() {
            return Err(bad());
        }
        tokens
            .iter()
            .zip(dims)
            .map(|(tok, &d)| {
                (0..d)
                    .find(|&lvl| self.symbol(lvl) == *tok)
                    .ok_or_else(bad)
            })
            .collect()
    }
}

/// Normalized pure state over a product of per-party level sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateRepr", into = "StateRepr")]
pub struct MultiPartyState {
    dims: Vec<usize>,
    alphabet: Alphabet,
    vector: StateVector,
}

/// JSON layout: `{"dims": [...], "alphabet": "...", "amplitudes": [[label, re, im], ...]}`
/// listing nonzero amplitudes only.
#[derive(Serialize, Deserialize)]
struct StateRepr {
    dims: Vec<usize>,
    alphabet: Alphabet,
    amplitudes: Vec<(String, f64, f64)>,
}

impl TryFrom<StateRepr> for MultiPartyState {
    type Error = Error;

    fn try_from(repr: StateRepr) -> Result<Self> {
        let terms = repr
            .amplitudes
            .iter()
            .map(|(label, re, im)| Ok((repr.alphabet.parse_label(label, &repr.dims)?, c(*re, *im))))
            .collect::<Result<Vec<_>>>()?;
        let total: usize = repr.dims.iter().product();
        let mut amps = vec![c(0.0, 0.0); total];
        for (levels, amp) in &terms {
            amps[index_of(&repr.dims, levels)?] += amp;
        }
        MultiPartyState::new(repr.dims, repr.alphabet, amps)
    }
}

impl From<MultiPartyState> for StateRepr {
    fn from(s: MultiPartyState) -> Self {
        let amplitudes = s
            .vector
            .labels()
            .iter()
            .zip(s.vector.amplitudes())
            .filter(|(_, z)| z.norm() > 0.0)
            .map(|(l, z)| (l.clone(), z.re, z.im))
            .collect();
        StateRepr {
            dims: s.dims,
            alphabet: s.alphabet,
            amplitudes,
        }
    }
}

impl MultiPartyState {
    /// Wraps a full amplitude vector; it must already be normalized.
    pub fn new(dims: Vec<usize>, alphabet: Alphabet, amplitudes: Vec<C64>) -> Result<Self> {
        let state = Self::unnormalized(dims, alphabet, amplitudes)?;
        if !state.vector.is_normalized(DEFAULT_TOL) {
            return Err(Error::Parse(format!(
                "state norm² {} differs from 1",
                state.vector.norm_sqr()
            )));
        }
        Ok(state)
    }

    fn unnormalized(dims: Vec<usize>, alphabet: Alphabet, amplitudes: Vec<C64>) -> Result<Self> {
        if let Some(&d) = dims.iter().find(|&&d| d == 0 || alphabet.max_dim().is_some_and(|m| d > m)) {
            return Err(Error::Parse(format!("party dimension {d} not allowed for {alphabet:?}")));
        }
        let total: usize = dims.iter().product();
        if amplitudes.len() != total {
            return Err(Error::LengthMismatch {
                expected: total,
                found: amplitudes.len(),
            });
        }
        let labels = (0..total).map(|i| label_for(&dims, alphabet, i)).collect();
        Ok(Self {
            vector: StateVector::new(amplitudes, labels)?,
            dims,
            alphabet,
        })
    }

    /// Builds `Σ amp |levels⟩` and normalizes it.
    pub fn from_terms(dims: Vec<usize>, alphabet: Alphabet, terms: &[(Vec<usize>, C64)]) -> Result<Self> {
        let total: usize = dims.iter().product();
        let mut amps = vec![c(0.0, 0.0); total];
        for (levels, amp) in terms {
            amps[index_of(&dims, levels)?] += amp;
        }
        let raw = Self::unnormalized(dims, alphabet, amps)?;
        Ok(Self {
            vector: raw.vector.normalize()?,
            ..raw
        })
    }

    pub fn n_parties(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn vector(&self) -> &StateVector {
        &self.vector
    }

    pub fn amplitudes(&self) -> &[C64] {
        self.vector.amplitudes()
    }

    pub fn amplitude(&self, levels: &[usize]) -> Result<C64> {
        Ok(self.amplitudes()[index_of(&self.dims, levels)?])
    }

    pub fn label(&self, levels: &[usize]) -> Result<String> {
        Ok(label_for(&self.dims, self.alphabet, index_of(&self.dims, levels)?))
    }

    /// Nonzero amplitudes with their level tuples.
    pub fn support(&self) -> Vec<(Vec<usize>, C64)> {
        self.amplitudes()
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm() > 0.0)
            .map(|(i, z)| (levels_of(&self.dims, i), *z))
            .collect()
    }

    pub fn with_alphabet(&self, alphabet: Alphabet) -> Result<Self> {
        Self::new(self.dims.clone(), alphabet, self.amplitudes().to_vec())
    }

    /// Applies `op` to one party's factor.
    pub fn apply_local(&self, party: usize, op: &ComplexMatrix) -> Result<Vec<C64>> {
        apply_local(self.amplitudes(), &self.dims, party, op)
    }

    /// Max amplitude difference against another state of the same shape.
    pub fn max_abs_diff(&self, other: &MultiPartyState) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch {
                op: "state comparison",
                left: (self.dims.iter().product(), 1),
                right: (other.dims.iter().product(), 1),
            });
        }
        self.vector.max_abs_diff(&other.vector)
    }
}

fn index_of(dims: &[usize], levels: &[usize]) -> Result<usize> {
    if levels.len() != dims.len() {
        return Err(Error::LengthMismatch {
            expected: dims.len(),
            found: levels.len(),
        });
    }
    levels.iter().zip(dims).try_fold(0usize, |acc, (&l, &d)| {
        if l >= d {
            Err(Error::ModeOutOfRange { mode: l, n_modes: d })
        } else {
            Ok(acc * d + l)
        }
    })
}

fn levels_of(dims: &[usize], mut index: usize) -> Vec<usize> {
    let mut levels = vec![0; dims.len()];
    for (slot, &d) in levels.iter_mut().zip(dims).rev() {
        *slot = index % d;
        index /= d;
    }
    levels
}

fn label_for(dims: &[usize], alphabet: Alphabet, index: usize) -> String {
    levels_of(dims, index)
        .into_iter()
        .map(|l| alphabet.symbol(l))
        .collect::<Vec<_>>()
        .join(alphabet.separator(dims))
}

fn apply_local(amps: &[C64], dims: &[usize], party: usize, op: &ComplexMatrix) -> Result<Vec<C64>> {
    let d = *dims.get(party).ok_or(Error::ModeOutOfRange {
        mode: party,
        n_modes: dims.len(),
    })?;
    if op.rows() != d || op.cols() != d {
        return Err(Error::DimensionMismatch {
            op: "local operator",
            left: (op.rows(), op.cols()),
            right: (d, d),
        });
    }
    let inner: usize = dims[party + 1..].iter().product();
    let outer: usize = dims[..party].iter().product();
    let mut out = vec![c(0.0, 0.0); amps.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * d * inner + i;
            for r in 0..d {
                out[base + r * inner] = (0..d).map(|k| op.get(r, k) * amps[base + k * inner]).sum();
            }
        }
    }
    Ok(out)
}

fn require_parties(what: &'static str, n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::TooSmall { what, min: 2, got: n });
    }
    Ok(())
}

/// `(|S…S⟩ + |L…L⟩)/√2` on `n` time-bin qubits.
pub fn ghz_state(n: usize) -> Result<MultiPartyState> {
    require_parties("GHZ party count", n)?;
    let h = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    MultiPartyState::from_terms(vec![2; n], Alphabet::TimeBin, &[(vec![0; n], h), (vec![1; n], h)])
}

/// `Σ_i |i…i⟩/√n` on `n` parties with `n` levels each.
pub fn qunit_state(n: usize) -> Result<MultiPartyState> {
    require_parties("qunit party count", n)?;
    let amp = c(1.0 / (n as f64).sqrt(), 0.0);
    let terms: Vec<_> = (0..n).map(|i| (vec![i; n], amp)).collect();
    MultiPartyState::from_terms(vec![n; n], Alphabet::Level, &terms)
}

/// `⟨ψ| O_0 ⊗ … ⊗ O_{n−1} |ψ⟩` for a Hermitian product observable.
pub fn expectation(state: &MultiPartyState, observables: &[&ComplexMatrix]) -> Result<f64> {
    if observables.len() != state.n_parties() {
        return Err(Error::LengthMismatch {
            expected: state.n_parties(),
            found: observables.len(),
        });
    }
    let mut amps = state.amplitudes().to_vec();
    for (party, op) in observables.iter().enumerate() {
        amps = apply_local(&amps, state.dims(), party, op)?;
    }
    let value: C64 = state.amplitudes().iter().zip(&amps).map(|(a, b)| a.conj() * b).sum();
    if value.im.abs() > EXPECTATION_IMAG_TOL {
        return Err(Error::ComplexExpectation(value.im));
    }
    Ok(value.re)
}

/// A ±1-valued qubit observable.
#[derive(Clone, Debug, PartialEq)]
pub struct Dichotomic(ComplexMatrix);

impl Dichotomic {
    /// Accepts a 2×2 Hermitian involution with spectrum `{+1, −1}`.
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        const TOL: f64 = 1e-12;
        if m.rows() != 2 || m.cols() != 2 {
            return Err(Error::NotDichotomic(format!("shape {}x{}", m.rows(), m.cols())));
        }
        if !m.is_hermitian(TOL) {
            return Err(Error::NotDichotomic("not Hermitian".into()));
        }
        let sq_dev = m.matmul(&m)?.max_abs_diff(&ComplexMatrix::identity(2))?;
        let trace = m.get(0, 0) + m.get(1, 1);
        if sq_dev > TOL || trace.norm() > TOL {
            return Err(Error::NotDichotomic("spectrum is not {+1, -1}".into()));
        }
        Ok(Self(m))
    }

    pub fn x() -> Self {
        Self(pauli::x())
    }

    pub fn y() -> Self {
        Self(pauli::y())
    }

    pub fn z() -> Self {
        Self(pauli::z())
    }

    /// `cos φ σ_x + sin φ σ_y`.
    pub fn equatorial(phi: f64) -> Self {
        let (s, co) = phi.sin_cos();
        Self(ComplexMatrix::from_fn(2, 2, |i, j| match (i, j) {
            (0, 1) => c(co, -s),
            (1, 0) => c(co, s),
            _ => c(0.0, 0.0),
        }))
    }

    pub fn from_char(ch: char) -> Result<Self> {
        match ch.to_ascii_lowercase() {
            'x' => Ok(Self::x()),
            'y' => Ok(Self::y()),
            'z' => Ok(Self::z()),
            other => Err(Error::Parse(format!("unknown Pauli setting {other:?}"))),
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    /// Projector onto the `sign` eigenspace, `(I + sign·O)/2`.
    pub fn projector(&self, sign: i8) -> ComplexMatrix {
        let s = f64::from(sign);
        ComplexMatrix::from_fn(2, 2, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            (c(id, 0.0) + self.0.get(i, j) * s) * 0.5
        })
    }
}

/// Two observables for one party, indexed by setting.
pub type PartySettings = [Dichotomic; 2];

/// `(A_0, A_1) = (σ_y, σ_x)` for every party.
pub fn yx_settings(n: usize) -> Vec<PartySettings> {
    (0..n).map(|_| [Dichotomic::y(), Dichotomic::x()]).collect()
}

/// Equatorial settings that maximize the [`MerminForm::Mabk`] value on
/// GHZ states: party 0 uses phases `(δ, δ + π/2)` with `δ = −(n−1)π/4`,
/// the rest use `(σ_x, σ_y)`.
pub fn mabk_optimal_settings(n: usize) -> Vec<PartySettings> {
    use std::f64::consts::FRAC_PI_2;
    let delta = -((n as f64) - 1.0) * std::f64::consts::FRAC_PI_4;
    (0..n)
        .map(|k| {
            if k == 0 {
                [Dichotomic::equatorial(delta), Dichotomic::equatorial(delta + FRAC_PI_2)]
            } else {
                [Dichotomic::x(), Dichotomic::y()]
            }
        })
        .collect()
}

/// Linear Bell functional `Σ_s c_s ⟨Π_k O_k(s_k)⟩` over two settings per party.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BellFunctional {
    n_parties: usize,
    terms: Vec<BellTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BellTerm {
    pub settings: Vec<u8>,
    pub coeff: f64,
}

/// Which n-party Mermin polynomial to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MerminForm {
    /// `2·M_n` with `M_n = ½M_{n−1}(B_0+B_1) + ½M'_{n−1}(B_0−B_1)`; CHSH at `n = 2`.
    Mabk,
    /// `Im Π_k(A_k0 + iA_k1)` for odd `n`, `Re` for even `n`.
    Product,
}

impl BellFunctional {
    pub fn new(n_parties: usize, terms: Vec<BellTerm>) -> Result<Self> {
        if let Some(t) = terms.iter().find(|t| t.settings.len() != n_parties || t.settings.iter().any(|&s| s > 1)) {
            return Err(Error::Parse(format!("bad term settings {:?}", t.settings)));
        }
        Ok(Self { n_parties, terms })
    }

    /// `⟨A0B0C1⟩ + ⟨A0B1C0⟩ + ⟨A1B0C0⟩ − ⟨A1B1C1⟩`.
    pub fn mermin3() -> Self {
        let t = |s: [u8; 3], coeff: f64| BellTerm {
            settings: s.to_vec(),
            coeff,
        };
        Self {
            n_parties: 3,
            terms: vec![t([0, 0, 1], 1.0), t([0, 1, 0], 1.0), t([1, 0, 0], 1.0), t([1, 1, 1], -1.0)],
        }
    }

    pub fn mermin(n: usize, form: MerminForm) -> Result<Self> {
        require_parties("Mermin party count", n)?;
        let map = match form {
            MerminForm::Mabk => mabk_terms(n),
            MerminForm::Product => product_terms(n),
        };
        let terms = map
            .into_iter()
            .filter(|(_, coeff)| *coeff != 0.0)
            .map(|(settings, coeff)| BellTerm { settings, coeff })
            .collect();
        Ok(Self { n_parties: n, terms })
    }

    pub fn n_parties(&self) -> usize {
        self.n_parties
    }

    pub fn terms(&self) -> &[BellTerm] {
        &self.terms
    }

    /// `Σ|c_s|`, the value reached when every correlator equals `sign(c_s)`.
    pub fn algebraic_max(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.abs()).sum()
    }

    /// Signed quantum value on `state`.
    pub fn quantum_value(&self, state: &MultiPartyState, settings: &[PartySettings]) -> Result<f64> {
        Ok(self
            .correlators(state, settings)?
            .iter()
            .zip(&self.terms)
            .map(|(e, t)| e * t.coeff)
            .sum())
    }

    /// `⟨Π_k O_k(s_k)⟩` for every term.
    pub fn correlators(&self, state: &MultiPartyState, settings: &[PartySettings]) -> Result<Vec<f64>> {
        if settings.len() != self.n_parties || state.n_parties() != self.n_parties {
            return Err(Error::LengthMismatch {
                expected: self.n_parties,
                found: settings.len().min(state.n_parties()),
            });
        }
        self.terms
            .iter()
            .map(|t| {
                let ops: Vec<&ComplexMatrix> = t
                    .settings
                    .iter()
                    .zip(settings)
                    .map(|(&s, ps)| ps[usize::from(s)].matrix())
                    .collect();
                expectation(state, &ops)
            })
            .collect()
    }

    /// Value on deterministic ±1 outcomes `outcomes[party][setting]`.
    pub fn deterministic_value(&self, outcomes: &[[i8; 2]]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let prod: i32 = t
                    .settings
                    .iter()
                    .zip(outcomes)
                    .map(|(&s, o)| i32::from(o[usize::from(s)]))
                    .product();
                t.coeff * f64::from(prod)
            })
            .sum()
    }
}

type TermMap = BTreeMap<Vec<u8>, f64>;

fn extend_with(map: &TermMap, setting: u8, coeff: f64, into: &mut TermMap) {
    for (k, v) in map {
        let mut key = k.clone();
        key.push(setting);
        *into.entry(key).or_insert(0.0) += v * coeff;
    }
}

fn mabk_terms(n: usize) -> TermMap {
    let mut m: TermMap = [(vec![0u8], 1.0)].into_iter().collect();
    let mut mp: TermMap = [(vec![1u8], 1.0)].into_iter().collect();
    for _ in 1..n {
        let mut next = TermMap::new();
        let mut next_p = TermMap::new();
        // M_n = ½M(B0+B1) + ½M'(B0−B1);  M'_n = ½M'(B1+B0) + ½M(B1−B0)
        extend_with(&m, 0, 0.5, &mut next);
        extend_with(&m, 1, 0.5, &mut next);
        extend_with(&mp, 0, 0.5, &mut next);
        extend_with(&mp, 1, -0.5, &mut next);
        extend_with(&mp, 1, 0.5, &mut next_p);
        extend_with(&mp, 0, 0.5, &mut next_p);
        extend_with(&m, 1, 0.5, &mut next_p);
        extend_with(&m, 0, -0.5, &mut next_p);
        m = next;
        mp = next_p;
    }
    m.into_iter().map(|(k, v)| (k, 2.0 * v)).collect()
}

fn product_terms(n: usize) -> TermMap {
    // coefficient of a setting tuple with w ones is i^w; keep Im (odd n) or Re (even n)
    (0..1usize << n)
        .map(|bits| {
            let settings: Vec<u8> = (0..n).map(|k| ((bits >> (n - 1 - k)) & 1) as u8).collect();
            let w = bits.count_ones() % 4;
            let (re, im) = match w {
                0 => (1.0, 0.0),
                1 => (0.0, 1.0),
                2 => (-1.0, 0.0),
                _ => (0.0, -1.0),
            };
            (settings, if n % 2 == 1 { im } else { re })
        })
        .collect()
}

/// The four three-party correlators and `μ = |t₁ + t₂ + t₃ − t₄|`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MerminResult {
    pub terms: [f64; 4],
    pub mu: f64,
}

pub fn mermin3(state: &MultiPartyState, settings: &[PartySettings]) -> Result<MerminResult> {
    let f = BellFunctional::mermin3();
    let e = f.correlators(state, settings)?;
    let terms = [e[0], e[1], e[2], e[3]];
    Ok(MerminResult {
        terms,
        mu: (terms[0] + terms[1] + terms[2] - terms[3]).abs(),
    })
}

/// Absolute value of the n-party Mermin polynomial of the given form.
pub fn mermin_n(state: &MultiPartyState, settings: &[PartySettings], form: MerminForm) -> Result<f64> {
    Ok(BellFunctional::mermin(state.n_parties(), form)?
        .quantum_value(state, settings)?
        .abs())
}

/// Joint outcome probabilities after each party applies its analyzer unitary.
pub fn outcome_distribution(state: &MultiPartyState, analyzers: &[&ComplexMatrix]) -> Result<Vec<f64>> {
    if analyzers.len() != state.n_parties() {
        return Err(Error::LengthMismatch {
            expected: state.n_parties(),
            found: analyzers.len(),
        });
    }
    let mut amps = state.amplitudes().to_vec();
    for (party, u) in analyzers.iter().enumerate() {
        amps = apply_local(&amps, state.dims(), party, u)?;
    }
    Ok(amps.iter().map(|z| z.norm_sqr()).collect())
}

/// Probabilities of every sign pattern for qubit parties measuring `observables`.
/// Sign patterns are ordered with `+1` before `−1`, party 0 most significant.
pub fn sign_distribution(state: &MultiPartyState, observables: &[&Dichotomic]) -> Result<Vec<(Vec<i8>, f64)>> {
    let n = state.n_parties();
    if observables.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: observables.len(),
        });
    }
    (0..1usize << n)
        .map(|bits| {
            let signs: Vec<i8> = (0..n)
                .map(|k| if (bits >> (n - 1 - k)) & 1 == 0 { 1 } else { -1 })
                .collect();
            let projectors: Vec<ComplexMatrix> = signs
                .iter()
                .zip(observables)
                .map(|(&s, o)| o.projector(s))
                .collect();
            let refs: Vec<&ComplexMatrix> = projectors.iter().collect();
            let p = expectation(state, &refs)?;
            Ok((signs, p.max(0.0)))
        })
        .collect()
}

/// Where one output port of a photon's network ends up.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub party: usize,
    /// Local mode (level) at the receiving party.
    pub mode: usize,
    /// Path delay in units of the interferometer imbalance.
    pub delay: u32,
}

/// One photon's preparation optics: it enters `input_mode` of `network`, and
/// output mode `k` is routed to `outputs[k]` (`None` for an unmonitored port).
#[derive(Clone, Debug, PartialEq)]
pub struct PhotonPath {
    pub network: InterferometerNetwork,
    pub input_mode: usize,
    pub outputs: Vec<Option<Route>>,
}

/// Ideal source emitting every photon at one common, completely unknown time.
/// Paths whose delays differ by a global shift are indistinguishable.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SimultaneousSource;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoincidenceRule {
    /// All photons detected in the same time bin.
    SameBin,
    /// Exactly one detection per party, all in the same time bin.
    OnePerPartySameBin,
}

impl CoincidenceRule {
    fn accepts(self, routes: &[Route], n_parties: usize) -> bool {
        let same_bin = routes.windows(2).all(|w| w[0].delay == w[1].delay);
        match self {
            CoincidenceRule::SameBin => same_bin,
            CoincidenceRule::OnePerPartySameBin => {
                let mut seen = vec![0usize; n_parties];
                routes.iter().for_each(|r| seen[r.party] += 1);
                same_bin && seen.iter().all(|&k| k == 1)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PostselectedState {
    pub state: MultiPartyState,
    pub selection_probability: f64,
}

/// Postselected joint state of `photons.len()` photons sent through their
/// networks to `n_parties` parties.
///
/// Selected path configurations are summed coherently into the per-party
/// local-mode basis; the selection probability is the squared norm of that
/// sum before renormalization.
pub fn prepare_postselected(
    _source: SimultaneousSource,
    photons: &[PhotonPath],
    n_parties: usize,
    rule: CoincidenceRule,
    alphabet: Alphabet,
) -> Result<PostselectedState> {
    let mut branches: Vec<Vec<(Route, C64)>> = Vec::with_capacity(photons.len());
    for p in photons {
        if p.outputs.len() != p.network.n_modes() {
            return Err(Error::LengthMismatch {
                expected: p.network.n_modes(),
                found: p.outputs.len(),
            });
        }
        let amps = p.network.propagate(p.input_mode)?;
        let live: Vec<(Route, C64)> = p
            .outputs
            .iter()
            .zip(amps)
            .filter_map(|(route, amp)| route.map(|r| (r, amp)))
            .filter(|(_, amp)| amp.norm() > 0.0)
            .collect();
        if let Some((r, _)) = live.iter().find(|(r, _)| r.party >= n_parties) {
            return Err(Error::ModeOutOfRange {
                mode: r.party,
                n_modes: n_parties,
            });
        }
        branches.push(live);
    }

    let mut dims = vec![1usize; n_parties];
    for (r, _) in branches.iter().flatten() {
        dims[r.party] = dims[r.party].max(r.mode + 1);
    }
    let total: usize = dims.iter().product();
    let mut amps = vec![c(0.0, 0.0); total];

    let mut choice = vec![0usize; branches.len()];
    if branches.iter().all(|b| !b.is_empty()) {
        loop {
            let routes: Vec<Route> = choice.iter().zip(&branches).map(|(&k, b)| b[k].0).collect();
            if rule.accepts(&routes, n_parties) {
                let amp: C64 = choice.iter().zip(&branches).map(|(&k, b)| b[k].1).product();
                let mut levels = vec![0usize; n_parties];
                for r in &routes {
                    levels[r.party] = r.mode;
                }
                amps[index_of(&dims, &levels)?] += amp;
            }
            // odometer over path choices
            let mut k = 0;
            while k < choice.len() {
                choice[k] += 1;
                if choice[k] < branches[k].len() {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
            if k == choice.len() {
                break;
            }
        }
    }

    let p: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
    if p <= f64::EPSILON * 16.0 {
        return Err(Error::PostselectionEmpty);
    }
    let state = MultiPartyState::unnormalized(dims, alphabet, amps)?;
    Ok(PostselectedState {
        state: MultiPartyState {
            vector: state.vector.normalize()?,
            ..state
        },
        selection_probability: p,
    })
}

fn balanced_splitter() -> InterferometerNetwork {
    let mut net = InterferometerNetwork::empty(2);
    net.push(OpticalElement::beam_splitter(0, 1, 0.5, 0.0).expect("valid splitter"))
        .expect("two-mode splitter");
    net
}

/// Unbalanced interferometers with both paths of photon `k` ending at party `k`.
/// Use with [`CoincidenceRule::SameBin`].
pub fn franson_setup(n: usize) -> Result<Vec<PhotonPath>> {
    require_parties("party count", n)?;
    Ok((0..n)
        .map(|k| PhotonPath {
            network: balanced_splitter(),
            input_mode: 0,
            outputs: vec![
                Some(Route { party: k, mode: 0, delay: 0 }),
                Some(Route { party: k, mode: 1, delay: 1 }),
            ],
        })
        .collect())
}

/// Crossed geometry: the short path of photon `k` ends at party `k` and its
/// long path at party `k+1 (mod n)`. Use with [`CoincidenceRule::OnePerPartySameBin`].
pub fn crossed_setup(n: usize) -> Result<Vec<PhotonPath>> {
    require_parties("party count", n)?;
    Ok((0..n)
        .map(|k| PhotonPath {
            network: balanced_splitter(),
            input_mode: 0,
            outputs: vec![
                Some(Route { party: k, mode: 0, delay: 0 }),
                Some(Route { party: (k + 1) % n, mode: 1, delay: 1 }),
            ],
        })
        .collect())
}

/// `n`-path generalization: photon `k` is split by [`generation_cascade`] and
/// path `j` (delay `j`) ends at party `k+j (mod n)` in local mode `j`.
pub fn qunit_setup(n: usize) -> Result<Vec<PhotonPath>> {
    require_parties("party count", n)?;
    let net = generation_cascade(n)?;
    Ok((0..n)
        .map(|k| PhotonPath {
            network: net.clone(),
            input_mode: 0,
            outputs: (0..n)
                .map(|j| {
                    Some(Route {
                        party: (k + j) % n,
                        mode: j,
                        delay: j as u32,
                    })
                })
                .collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

    #[test]
    fn ghz3_amplitudes() {
        let g = ghz_state(3).unwrap();
        assert_eq!(g.amplitudes().len(), 8);
        assert_abs_diff_eq!(g.vector().amplitude_of("SSS").unwrap().re, FRAC_1_SQRT_2);
        assert_abs_diff_eq!(g.vector().amplitude_of("LLL").unwrap().re, FRAC_1_SQRT_2);
        assert_eq!(g.support().len(), 2);
        assert!(ghz_state(1).is_err());
    }

    #[test]
    fn small_state_cases() {
        let b = ghz_state(2).unwrap();
        assert_eq!(b.vector().labels(), &["SS", "SL", "LS", "LL"]);
        let g5 = ghz_state(5).unwrap();
        assert!(g5.vector().is_normalized(1e-15));
        assert_eq!(g5.support().len(), 2);

        let q3 = qunit_state(3).unwrap();
        for lbl in ["111", "222", "333"] {
            assert_abs_diff_eq!(q3.vector().amplitude_of(lbl).unwrap().re, 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        }
        let q4 = qunit_state(4).unwrap();
        assert_eq!(q4.support().len(), 4);
        assert!(q4.support().iter().all(|(_, z)| (z.re - 0.5).abs() < 1e-15));
        assert_eq!(qunit_state(2).unwrap().support().len(), 2);
    }

    #[test]
    fn ghz_stabilizer_values() {
        let g = ghz_state(3).unwrap();
        let (x, y) = (pauli::x(), pauli::y());
        assert_abs_diff_eq!(expectation(&g, &[&x, &y, &y]).unwrap(), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(expectation(&g, &[&x, &x, &x]).unwrap(), 1.0, epsilon = 1e-12);
        let sss = MultiPartyState::from_terms(vec![2; 3], Alphabet::TimeBin, &[(vec![0; 3], c(1.0, 0.0))]).unwrap();
        assert_abs_diff_eq!(expectation(&sss, &[&x, &y, &y]).unwrap(), 0.0);
    }

    #[test]
    fn expectation_errors() {
        let g = ghz_state(3).unwrap();
        let x = pauli::x();
        assert!(matches!(expectation(&g, &[&x, &x]), Err(Error::LengthMismatch { .. })));
        let i3 = ComplexMatrix::identity(3);
        assert!(matches!(expectation(&g, &[&x, &x, &i3]), Err(Error::DimensionMismatch { .. })));
        // σ+ is not Hermitian; ⟨GHZ|σ+⊗σ+⊗σ+·i|GHZ⟩ has an imaginary part
        let raise = ComplexMatrix::from_fn(2, 2, |i, j| if (i, j) == (0, 1) { c(0.0, 1.0) } else { c(0.0, 0.0) });
        assert!(matches!(
            expectation(&g, &[&raise, &raise, &raise]),
            Err(Error::ComplexExpectation(_))
        ));
    }

    #[test]
    fn dichotomic_validation() {
        assert!(Dichotomic::new(pauli::x()).is_ok());
        assert!(Dichotomic::new(ComplexMatrix::identity(2)).is_err());
        assert!(Dichotomic::new(ComplexMatrix::identity(3)).is_err());
        let non_herm = ComplexMatrix::from_fn(2, 2, |i, j| if i < j { c(1.0, 0.0) } else { c(0.0, 0.0) });
        assert!(Dichotomic::new(non_herm).is_err());
        let e = Dichotomic::equatorial(0.83);
        assert!(Dichotomic::new(e.matrix().clone()).is_ok());
        assert_abs_diff_eq!(
            Dichotomic::equatorial(PI / 2.0).matrix().max_abs_diff(&pauli::y()).unwrap(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn mermin3_examples() {
        let g = ghz_state(3).unwrap();
        let r = mermin3(&g, &yx_settings(3)).unwrap();
        assert_abs_diff_eq!(r.mu, 4.0, epsilon = 1e-12);
        assert_eq!(r.terms.map(|t| t.round()), [-1.0, -1.0, -1.0, 1.0]);

        let sss = MultiPartyState::from_terms(vec![2; 3], Alphabet::TimeBin, &[(vec![0; 3], c(1.0, 0.0))]).unwrap();
        assert_abs_diff_eq!(mermin3(&sss, &yx_settings(3)).unwrap().mu, 0.0);

        let xs: Vec<PartySettings> = (0..3).map(|_| [Dichotomic::x(), Dichotomic::x()]).collect();
        let r = mermin3(&g, &xs).unwrap();
        for t in r.terms {
            assert_abs_diff_eq!(t, 1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(r.mu, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn mermin_forms_reduce_to_three_party_functional() {
        let m3 = BellFunctional::mermin3();
        for form in [MerminForm::Mabk, MerminForm::Product] {
            let f = BellFunctional::mermin(3, form).unwrap();
            let mut a: Vec<_> = f.terms().iter().map(|t| (t.settings.clone(), t.coeff)).collect();
            let mut b: Vec<_> = m3.terms().iter().map(|t| (t.settings.clone(), t.coeff)).collect();
            a.sort_by(|x, y| x.0.cmp(&y.0));
            b.sort_by(|x, y| x.0.cmp(&y.0));
            assert_eq!(a, b, "{form:?}");
        }
    }

    #[test]
    fn mabk_two_party_is_chsh() {
        let f = BellFunctional::mermin(2, MerminForm::Mabk).unwrap();
        let mut terms: Vec<_> = f.terms().iter().map(|t| (t.settings.clone(), t.coeff)).collect();
        terms.sort_by(|x, y| x.0.cmp(&y.0));
        assert_eq!(
            terms,
            vec![(vec![0, 0], 1.0), (vec![0, 1], 1.0), (vec![1, 0], 1.0), (vec![1, 1], -1.0)]
        );
    }

    #[test]
    fn chsh_optimum_matches_grid_search() {
        // oracle: ⟨E(a)E(b)⟩ = cos(a+b) on GHZ₂; maximize over a 1° grid
        let f = BellFunctional::mermin(2, MerminForm::Mabk).unwrap();
        let g = ghz_state(2).unwrap();
        let best = mermin_n(&g, &mabk_optimal_settings(2), MerminForm::Mabk).unwrap();
        assert_abs_diff_eq!(best, 2.0 * SQRT_2, epsilon = 1e-12);

        let step = PI / 180.0;
        let mut grid_best: f64 = 0.0;
        for a1 in 0..180 {
            for b0 in 0..360 {
                for b1 in 0..360 {
                    let (a0, a1) = (0.0, a1 as f64 * step);
                    let (b0, b1) = (b0 as f64 * step, b1 as f64 * step);
                    let v = (a0 + b0).cos() + (a0 + b1).cos() + (a1 + b0).cos() - (a1 + b1).cos();
                    grid_best = grid_best.max(v.abs());
                }
            }
        }
        assert!(best >= grid_best - 1e-12);
        assert_abs_diff_eq!(grid_best, 2.0 * SQRT_2, epsilon = 1e-3);
        let _ = f;
    }

    #[test]
    fn product_form_on_ghz_gives_power_of_two() {
        for n in 2..=6 {
            let g = ghz_state(n).unwrap();
            let v = mermin_n(&g, &yx_settings(n), MerminForm::Product).unwrap();
            assert_abs_diff_eq!(v, 2f64.powi(n as i32 - 1), epsilon = 1e-10);
        }
    }

    #[test]
    fn mabk_optimal_value() {
        for n in 2..=6 {
            let g = ghz_state(n).unwrap();
            let v = mermin_n(&g, &mabk_optimal_settings(n), MerminForm::Mabk).unwrap();
            assert_abs_diff_eq!(v, 2f64.powf((n as f64 + 1.0) / 2.0), epsilon = 1e-10);
        }
    }

    #[test]
    fn deterministic_value_of_mermin3() {
        let f = BellFunctional::mermin3();
        assert_eq!(f.deterministic_value(&[[1, 1], [1, 1], [1, 1]]), 2.0);
        assert_eq!(f.algebraic_max(), 4.0);
    }

    #[test]
    fn sign_distribution_is_consistent() {
        let g = ghz_state(3).unwrap();
        let (y, x) = (Dichotomic::y(), Dichotomic::x());
        let dist = sign_distribution(&g, &[&y, &y, &x]).unwrap();
        let total: f64 = dist.iter().map(|(_, p)| p).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        let corr: f64 = dist
            .iter()
            .map(|(s, p)| f64::from(s.iter().map(|&v| i32::from(v)).product::<i32>()) * p)
            .sum();
        assert_abs_diff_eq!(corr, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn franson_and_crossed_geometries_prepare_ghz() {
        let ghz = ghz_state(3).unwrap();
        for (setup, rule) in [
            (franson_setup(3).unwrap(), CoincidenceRule::SameBin),
            (crossed_setup(3).unwrap(), CoincidenceRule::OnePerPartySameBin),
        ] {
            let out = prepare_postselected(SimultaneousSource, &setup, 3, rule, Alphabet::TimeBin).unwrap();
            assert_abs_diff_eq!(out.selection_probability, 0.25, epsilon = 1e-15);
            assert!(out.state.max_abs_diff(&ghz).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn qunit_geometry_prepares_qunit_state() {
        for n in 2..=5 {
            let out = prepare_postselected(
                SimultaneousSource,
                &qunit_setup(n).unwrap(),
                n,
                CoincidenceRule::OnePerPartySameBin,
                Alphabet::Level,
            )
            .unwrap();
            assert!(out.state.max_abs_diff(&qunit_state(n).unwrap()).unwrap() <= 1e-12, "n = {n}");
            // n aligned configurations out of n^n, each with weight n^{-n}
            assert_abs_diff_eq!(out.selection_probability, (n as f64).powi(1 - n as i32), epsilon = 1e-14);
        }
    }

    #[test]
    fn trivial_network_gives_product_state() {
        let photons: Vec<PhotonPath> = (0..3)
            .map(|k| PhotonPath {
                network: InterferometerNetwork::empty(1),
                input_mode: 0,
                outputs: vec![Some(Route { party: k, mode: 0, delay: 0 })],
            })
            .collect();
        let out = prepare_postselected(
            SimultaneousSource,
            &photons,
            3,
            CoincidenceRule::OnePerPartySameBin,
            Alphabet::Level,
        )
        .unwrap();
        assert_eq!(out.selection_probability, 1.0);
        assert_eq!(out.state.dims(), &[1, 1, 1]);
    }

    #[test]
    fn empty_postselection_is_an_error() {
        // both photons always land at party 0
        let photons: Vec<PhotonPath> = (0..2)
            .map(|_| PhotonPath {
                network: InterferometerNetwork::empty(1),
                input_mode: 0,
                outputs: vec![Some(Route { party: 0, mode: 0, delay: 0 })],
            })
            .collect();
        assert!(matches!(
            prepare_postselected(SimultaneousSource, &photons, 2, CoincidenceRule::OnePerPartySameBin, Alphabet::Level),
            Err(Error::PostselectionEmpty)
        ));
    }

    #[test]
    fn state_json_lists_nonzero_amplitudes() {
        let g = ghz_state(3).unwrap();
        let json = serde_json::to_value(&g).unwrap();
        assert_eq!(json["dims"], serde_json::json!([2, 2, 2]));
        assert_eq!(json["amplitudes"].as_array().unwrap().len(), 2);
        assert_eq!(json["amplitudes"][1][0], "LLL");
        let back: MultiPartyState = serde_json::from_value(json).unwrap();
        assert_eq!(back, g);

        let q = qunit_state(3).unwrap();
        let back: MultiPartyState = serde_json::from_str(&serde_json::to_string(&q).unwrap()).unwrap();
        assert_eq!(back, q);

        let bad = r#"{"dims":[2,2],"alphabet":"time_bin","amplitudes":[["SS",1.0,0.0],["LL",1.0,0.0]]}"#;
        assert!(serde_json::from_str::<MultiPartyState>(bad).is_err());
    }

    #[test]
    fn wide_level_labels_use_separator() {
        let q = MultiPartyState::from_terms(vec![10, 10], Alphabet::Level, &[(vec![9, 0], c(1.0, 0.0))]).unwrap();
        assert_eq!(q.label(&[9, 0]).unwrap(), "10,1");
        let back: MultiPartyState = serde_json::from_str(&serde_json::to_string(&q).unwrap()).unwrap();
        assert_eq!(back, q);
    }
}
