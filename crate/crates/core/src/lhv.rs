//! Local hidden-variable strategies with time-bin postselection.
//!
//! A local instruction fixes, for each of a party's two settings, the time
//! bin (`S` early, `L` late) and the detector sign. Ensembles are weighted
//! mixtures of joint instructions; weights are either exact rationals or `f64`.

use std::fmt::{self, Debug, Display};
use std::str::FromStr;

use num_rational::Rational64;
use num_traits::{Num, Signed};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::source::EventRecord;
use crate::states::BellFunctional;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bin {
    S,
    L,
}

impl Bin {
    pub fn swapped(self) -> Self {
        match self {
            Bin::S => Bin::L,
            Bin::L => Bin::S,
        }
    }
}

impl Display for Bin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bin::S => "S",
            Bin::L => "L",
        })
    }
}

impl FromStr for Bin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S" | "t0" => Ok(Bin::S),
            "L" | "t1" => Ok(Bin::L),
            _ => Err(Error::Parse(format!("unknown time bin {s:?}"))),
        }
    }
}

/// Detection time bin plus detector sign, written `S+`, `L-`, ….
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Outcome {
    pub bin: Bin,
    pub sign: i8,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [
        Outcome { bin: Bin::S, sign: 1 },
        Outcome { bin: Bin::S, sign: -1 },
        Outcome { bin: Bin::L, sign: 1 },
        Outcome { bin: Bin::L, sign: -1 },
    ];

    pub fn new(bin: Bin, sign: i8) -> Result<Self> {
        if sign != 1 && sign != -1 {
            return Err(Error::Parse(format!("sign must be ±1, got {sign}")));
        }
        Ok(Self { bin, sign })
    }

    fn index(self) -> usize {
        Outcome::ALL.iter().position(|&o| o == self).unwrap_or(0)
    }
}

impl Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.bin, if self.sign > 0 { '+' } else { '-' })
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("bad outcome token {s:?}"));
        let (bin, sign) = s.split_at_checked(s.len().checked_sub(1).ok_or_else(bad)?).ok_or_else(bad)?;
        let sign = match sign {
            "+" => 1,
            "-" => -1,
            _ => return Err(bad()),
        };
        Outcome::new(bin.parse()?, sign)
    }
}

impl From<Outcome> for String {
    fn from(o: Outcome) -> Self {
        o.to_string()
    }
}

impl TryFrom<String> for Outcome {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Predetermined outcome for each of a party's two settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LocalInstruction(pub [Outcome; 2]);

impl LocalInstruction {
    pub fn outcome(&self, setting: u8) -> Outcome {
        self.0[usize::from(setting & 1)]
    }

    /// All 16 instructions.
    pub fn all() -> Vec<LocalInstruction> {
        Outcome::ALL
            .iter()
            .flat_map(|&a| Outcome::ALL.iter().map(move |&b| LocalInstruction([a, b])))
            .collect()
    }

    pub fn swapped_bins(self) -> Self {
        Self(self.0.map(|o| Outcome {
            bin: o.bin.swapped(),
            sign: o.sign,
        }))
    }

    pub fn flipped_signs(self) -> Self {
        Self(self.0.map(|o| Outcome {
            bin: o.bin,
            sign: -o.sign,
        }))
    }

    pub fn is_setting_independent(&self) -> bool {
        self.0[0].bin == self.0[1].bin
    }
}

/// Instruction whose time bin does not depend on the setting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedBinInstruction {
    pub bin: Bin,
    pub signs: [i8; 2],
}

impl FixedBinInstruction {
    /// All 8 instructions.
    pub fn all() -> Vec<FixedBinInstruction> {
        let mut out = Vec::with_capacity(8);
        for bin in [Bin::S, Bin::L] {
            for s0 in [1, -1] {
                for s1 in [1, -1] {
                    out.push(FixedBinInstruction { bin, signs: [s0, s1] });
                }
            }
        }
        out
    }
}

impl From<FixedBinInstruction> for LocalInstruction {
    fn from(f: FixedBinInstruction) -> Self {
        LocalInstruction(f.signs.map(|sign| Outcome { bin: f.bin, sign }))
    }
}

/// One instruction per party.
pub type Strategy = Vec<LocalInstruction>;

/// Scalar used for ensemble weights.
pub trait Weight:
    Clone + Debug + PartialOrd + Num + Signed + Display + FromStr + Send + Sync + 'static
{
    fn from_ratio(num: i64, den: i64) -> Self;
    /// Exact for dyadic coefficients.
    fn from_coeff(c: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn is_unit(&self) -> bool;
}

impl Weight for f64 {
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }

    fn from_coeff(c: f64) -> Self {
        c
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn is_unit(&self) -> bool {
        (self - 1.0).abs() <= 1e-9
    }
}

impl Weight for Rational64 {
    fn from_ratio(num: i64, den: i64) -> Self {
        Rational64::new(num, den)
    }

    fn from_coeff(c: f64) -> Self {
        let (mut x, mut den) = (c, 1i64);
        while x.fract() != 0.0 && den < 1 << 40 {
            x *= 2.0;
            den *= 2;
        }
        Rational64::new(x as i64, den)
    }

    fn to_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }

    fn is_unit(&self) -> bool {
        *self == Rational64::from_integer(1)
    }
}

/// Weighted mixture of joint deterministic strategies.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyEnsemble<W> {
    n_parties: usize,
    entries: Vec<(Strategy, W)>,
}

impl<W: Weight> StrategyEnsemble<W> {
    /// Weights must be nonnegative and sum to 1.
    pub fn new(n_parties: usize, entries: Vec<(Strategy, W)>) -> Result<Self> {
        if let Some((s, _)) = entries.iter().find(|(s, _)| s.len() != n_parties) {
            return Err(Error::InvalidEnsemble(format!(
                "strategy has {} instructions for {n_parties} parties",
                s.len()
            )));
        }
        if let Some((_, w)) = entries.iter().find(|(_, w)| w.is_negative()) {
            return Err(Error::InvalidEnsemble(format!("negative weight {w}")));
        }
        let total = entries.iter().fold(W::zero(), |acc, (_, w)| acc + w.clone());
        if !total.is_unit() {
            return Err(Error::InvalidEnsemble(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { n_parties, entries })
    }

    pub fn deterministic(strategy: Strategy) -> Self {
        Self {
            n_parties: strategy.len(),
            entries: vec![(strategy, W::one())],
        }
    }

    pub fn uniform(n_parties: usize, strategies: Vec<Strategy>) -> Result<Self> {
        let k = strategies.len() as i64;
        if k == 0 {
            return Err(Error::InvalidEnsemble("no strategies".into()));
        }
        Self::new(
            n_parties,
            strategies.into_iter().map(|s| (s, W::from_ratio(1, k))).collect(),
        )
    }

    pub fn n_parties(&self) -> usize {
        self.n_parties
    }

    pub fn entries(&self) -> &[(Strategy, W)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `p·self + (1−p)·other`; zero-weight entries are dropped.
    pub fn mix(&self, other: &Self, p: W) -> Result<Self> {
        if self.n_parties != other.n_parties {
            return Err(Error::InvalidEnsemble("mixing ensembles of different party counts".into()));
        }
        if p.is_negative() || p > W::one() {
            return Err(Error::InvalidEnsemble(format!("mixing weight {p} outside [0, 1]")));
        }
        let q = W::one() - p.clone();
        let entries = self
            .entries
            .iter()
            .map(|(s, w)| (s.clone(), w.clone() * p.clone()))
            .chain(other.entries.iter().map(|(s, w)| (s.clone(), w.clone() * q.clone())))
            .filter(|(_, w)| !w.is_zero())
            .collect();
        Self::new(self.n_parties, entries)
    }

    pub fn map_strategies(&self, f: impl Fn(&Strategy) -> Strategy) -> Self {
        Self {
            n_parties: self.n_parties,
            entries: self.entries.iter().map(|(s, w)| (f(s), w.clone())).collect(),
        }
    }

    pub fn to_f64(&self) -> StrategyEnsemble<f64> {
        StrategyEnsemble {
            n_parties: self.n_parties,
            entries: self.entries.iter().map(|(s, w)| (s.clone(), w.to_f64())).collect(),
        }
    }

    /// Probabilities of `S+, S−, L+, L−` for one party and setting.
    pub fn marginal(&self, party: usize, setting: u8) -> Result<[W; 4]> {
        if party >= self.n_parties {
            return Err(Error::ModeOutOfRange {
                mode: party,
                n_modes: self.n_parties,
            });
        }
        let mut out: [W; 4] = std::array::from_fn(|_| W::zero());
        for (s, w) in &self.entries {
            let k = s[party].outcome(setting).index();
            out[k] = out[k].clone() + w.clone();
        }
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
struct EnsembleRepr {
    n_parties: usize,
    entries: Vec<EntryRepr>,
}

#[derive(Serialize, Deserialize)]
struct EntryRepr {
    instructions: Strategy,
    weight: String,
}

impl<W: Weight> Serialize for StrategyEnsemble<W> {
    fn serialize<Ser: serde::Serializer>(&self, ser: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        EnsembleRepr {
            n_parties: self.n_parties,
            entries: self
                .entries
                .iter()
                .map(|(s, w)| EntryRepr {
                    instructions: s.clone(),
                    weight: w.to_string(),
                })
                .collect(),
        }
        .serialize(ser)
    }
}

impl<'de, W: Weight> Deserialize<'de> for StrategyEnsemble<W> {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = EnsembleRepr::deserialize(de)?;
        let entries = repr
            .entries
            .into_iter()
            .map(|e| {
                e.weight
                    .parse::<W>()
                    .map(|w| (e.instructions, w))
                    .map_err(|_| D::Error::custom(format!("bad weight {:?}", e.weight)))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        StrategyEnsemble::new(repr.n_parties, entries).map_err(D::Error::custom)
    }
}

/// Which joint time-bin patterns are kept.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// Keep iff every party sees the same bin (unbalanced-interferometer coincidences).
    SameBin,
    /// Keep everything.
    All,
}

impl SelectionRule {
    pub fn selects(self, bins: &[Bin]) -> bool {
        match self {
            SelectionRule::SameBin => bins.windows(2).all(|w| w[0] == w[1]),
            SelectionRule::All => true,
        }
    }
}

/// Whether `strategy` is kept at `settings`, and its sign product.
pub fn strategy_outcome(strategy: &[LocalInstruction], settings: &[u8], rule: SelectionRule) -> (bool, i8) {
    let outcomes: Vec<Outcome> = strategy.iter().zip(settings).map(|(i, &s)| i.outcome(s)).collect();
    let bins: Vec<Bin> = outcomes.iter().map(|o| o.bin).collect();
    let sign = outcomes.iter().map(|o| o.sign).product();
    (rule.selects(&bins), sign)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TermValue<W> {
    pub settings: Vec<u8>,
    pub coeff: f64,
    /// Conditional sign-product expectation; `None` when nothing is selected.
    pub value: Option<W>,
    pub selected_fraction: W,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PostselectedCorrelations<W> {
    pub terms: Vec<TermValue<W>>,
    /// `|Σ c·value|`; `None` if any term is undefined.
    pub mu: Option<W>,
    /// Selected fraction averaged over terms.
    pub selection_rate: W,
}

impl<W: Weight> PostselectedCorrelations<W> {
    pub fn to_f64(&self) -> PostselectedCorrelations<f64> {
        PostselectedCorrelations {
            terms: self
                .terms
                .iter()
                .map(|t| TermValue {
                    settings: t.settings.clone(),
                    coeff: t.coeff,
                    value: t.value.as_ref().map(W::to_f64),
                    selected_fraction: t.selected_fraction.to_f64(),
                })
                .collect(),
            mu: self.mu.as_ref().map(W::to_f64),
            selection_rate: self.selection_rate.to_f64(),
        }
    }

    pub fn undefined_terms(&self) -> Vec<&[u8]> {
        self.terms
            .iter()
            .filter(|t| t.value.is_none())
            .map(|t| t.settings.as_slice())
            .collect()
    }
}

/// Conditional correlations of every term of `functional` given selection.
pub fn evaluate_postselected<W: Weight>(
    ensemble: &StrategyEnsemble<W>,
    rule: SelectionRule,
    functional: &BellFunctional,
) -> Result<PostselectedCorrelations<W>> {
    if ensemble.n_parties() != functional.n_parties() {
        return Err(Error::LengthMismatch {
            expected: functional.n_parties(),
            found: ensemble.n_parties(),
        });
    }
    let terms: Vec<TermValue<W>> = functional
        .terms()
        .iter()
        .map(|t| {
            let (mut kept, mut signed) = (W::zero(), W::zero());
            for (s, w) in ensemble.entries() {
                let (sel, sign) = strategy_outcome(s, &t.settings, rule);
                if sel {
                    kept = kept + w.clone();
                    signed = if sign > 0 { signed + w.clone() } else { signed - w.clone() };
                }
            }
            TermValue {
                settings: t.settings.clone(),
                coeff: t.coeff,
                value: (!kept.is_zero()).then(|| signed / kept.clone()),
                selected_fraction: kept,
            }
        })
        .collect();
    let mu = terms
        .iter()
        .try_fold(W::zero(), |acc, t| {
            t.value.clone().map(|v| acc + W::from_coeff(t.coeff) * v)
        })
        .map(|v| v.abs());
    let n_terms = W::from_ratio(terms.len().max(1) as i64, 1);
    let selection_rate = terms
        .iter()
        .fold(W::zero(), |acc, t| acc + t.selected_fraction.clone())
        / n_terms;
    Ok(PostselectedCorrelations {
        terms,
        mu,
        selection_rate,
    })
}

const TABLE1_ROWS: [[&str; 6]; 16] = [
    ["S+", "L", "S+", "L", "L/S", "S+"],
    ["S+", "L", "S-", "L", "L/S", "S-"],
    ["S-", "L", "S+", "L", "L/S", "S-"],
    ["S-", "L", "S-", "L", "L", "S+"],
    ["S+", "L", "L", "S+", "S+", "L/S"],
    ["S+", "L", "L", "S-", "S-", "L/S"],
    ["S-", "L", "L", "S+", "S-", "L/S"],
    ["S-", "L", "L", "S-", "S+", "L/S"],
    ["L", "S+", "S+", "L", "S+", "L/S"],
    ["L", "S+", "S-", "L", "S-", "L/S"],
    ["L", "S-", "S+", "L", "S-", "L/S"],
    ["L", "S-", "S-", "L", "S+", "L/S"],
    ["L", "S+", "L", "S+", "L/S", "S-"],
    ["L", "S+", "L", "S-", "L/S", "S+"],
    ["L", "S-", "L", "S+", "L/S", "S+"],
    ["L", "S-", "L", "S-", "L/S", "S-"],
];

fn expand_cell(cell: &str) -> Vec<Outcome> {
    let l = [Outcome::ALL[2], Outcome::ALL[3]];
    match cell {
        "L" => l.to_vec(),
        "L/S" => vec![Outcome::ALL[2], Outcome::ALL[3], Outcome::ALL[0], Outcome::ALL[1]],
        token => vec![token.parse().expect("table token")],
    }
}

/// Rows of the three-party Franson-geometry model, each expanded over its
/// unsigned cells, with the `S↔L` swapped copy of every instruction set.
/// Returned per row so the row structure stays visible.
pub fn table1_rows() -> Vec<Vec<Strategy>> {
    TABLE1_ROWS
        .iter()
        .map(|row| {
            let cells: Vec<Vec<Outcome>> = row.iter().map(|c| expand_cell(c)).collect();
            let mut sets: Vec<[Outcome; 6]> = vec![[Outcome::ALL[0]; 6]];
            for (k, options) in cells.iter().enumerate() {
                sets = sets
                    .into_iter()
                    .flat_map(|base| {
                        options.iter().map(move |&o| {
                            let mut next = base;
                            next[k] = o;
                            next
                        })
                    })
                    .collect();
            }
            let direct: Vec<Strategy> = sets
                .iter()
                .map(|s| (0..3).map(|p| LocalInstruction([s[2 * p], s[2 * p + 1]])).collect())
                .collect();
            let swapped: Vec<Strategy> = direct
                .iter()
                .map(|s| s.iter().map(|i| i.swapped_bins()).collect())
                .collect();
            direct.into_iter().chain(swapped).collect()
        })
        .collect()
}

/// The model as an ensemble over exact rational weights: each printed row
/// carries total weight 1/16, spread uniformly over its expanded sets.
pub fn table1_model() -> StrategyEnsemble<Rational64> {
    table1_model_in()
}

pub fn table1_model_in<W: Weight>() -> StrategyEnsemble<W> {
    let rows = table1_rows();
    let n_rows = rows.len() as i64;
    let entries = rows
        .into_iter()
        .flat_map(|row| {
            let w = W::from_ratio(1, n_rows * row.len() as i64);
            row.into_iter().map(move |s| (s, w.clone()))
        })
        .collect();
    StrategyEnsemble::new(3, entries).expect("row weights sum to one")
}

/// Mixes the model with a copy whose party-0 signs are flipped so that
/// every postselected term scales by `target / 4`.
pub fn scaled_model<W: Weight>(target: W) -> Result<StrategyEnsemble<W>> {
    let four = W::from_ratio(4, 1);
    if target.is_negative() || target > four || !target.to_f64().is_finite() {
        return Err(Error::InvalidTarget(target.to_f64()));
    }
    let p = target / four;
    let base: StrategyEnsemble<W> = table1_model_in();
    let flipped = base.map_strategies(|s| {
        let mut s = s.clone();
        s[0] = s[0].flipped_signs();
        s
    });
    // a·base + (1−a)·flipped scales each term by 2a − 1 = p
    let a = (W::one() + p) / W::from_ratio(2, 1);
    base.mix(&flipped, a)
}

/// Outcome of an exhaustive maximization of postselected `μ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchResult {
    #[serde(serialize_with = "as_display")]
    pub mu_max: Rational64,
    pub witness: StrategyEnsemble<Rational64>,
    pub strategies_enumerated: usize,
}

fn as_display<T: Display, S: serde::Serializer>(v: &T, ser: S) -> std::result::Result<S::Ok, S::Error> {
    ser.collect_str(v)
}

fn joint_strategies(choices: &[LocalInstruction], n: usize) -> impl ParallelIterator<Item = Strategy> + '_ {
    let k = choices.len();
    let total = k.pow(n as u32);
    (0..total).into_par_iter().map(move |mut idx| {
        let mut s = vec![choices[0]; n];
        for slot in s.iter_mut().rev() {
            *slot = choices[idx % k];
            idx /= k;
        }
        s
    })
}

/// Maximizes `μ` over all mixtures of joint instructions whose time bins may
/// depend on the settings.
///
/// A strategy is consistent with an orientation `o = ±1` when it is selected
/// for at least one term and every term it is selected for has sign product
/// `o·sign(c)`. If consistent strategies cover every term, their uniform
/// mixture reaches the algebraic maximum `Σ|c|`, which bounds every mixture.
pub fn max_mu_setting_dependent(functional: &BellFunctional, rule: SelectionRule) -> Result<SearchResult> {
    let n = functional.n_parties();
    let all = LocalInstruction::all();
    let terms = functional.terms();
    let signatures: Vec<(Strategy, Vec<Option<i8>>)> = joint_strategies(&all, n)
        .map(|s| {
            let sig = terms
                .iter()
                .map(|t| {
                    let (sel, sign) = strategy_outcome(&s, &t.settings, rule);
                    sel.then_some(sign)
                })
                .collect();
            (s, sig)
        })
        .collect();
    let enumerated = signatures.len();

    for orientation in [1i8, -1] {
        let target = |c: f64| if c > 0.0 { orientation } else { -orientation };
        let consistent: Vec<&(Strategy, Vec<Option<i8>>)> = signatures
            .iter()
            .filter(|(_, sig)| {
                sig.iter().any(Option::is_some)
                    && sig
                        .iter()
                        .zip(terms)
                        .all(|(v, t)| v.is_none_or(|v| v == target(t.coeff)))
            })
            .collect();
        let covered = (0..terms.len()).all(|k| consistent.iter().any(|(_, sig)| sig[k].is_some()));
        if covered {
            let witness = StrategyEnsemble::uniform(n, consistent.into_iter().map(|(s, _)| s.clone()).collect())?;
            let mu_max = evaluate_postselected(&witness, rule, functional)?
                .mu
                .expect("every term covered");
            return Ok(SearchResult {
                mu_max,
                witness,
                strategies_enumerated: enumerated,
            });
        }
    }
    Err(Error::InvalidEnsemble(
        "consistent strategies do not cover every term; the algebraic maximum is not reachable".into(),
    ))
}

/// Maximizes `μ` over mixtures of instructions with setting-independent bins.
///
/// Selection then ignores the settings, so the selected sub-ensemble is an
/// ordinary local model and the optimum is attained by one deterministic
/// strategy.
pub fn max_mu_setting_independent(functional: &BellFunctional, rule: SelectionRule) -> Result<SearchResult> {
    let n = functional.n_parties();
    let fixed: Vec<LocalInstruction> = FixedBinInstruction::all().into_iter().map(Into::into).collect();
    let scored: Vec<(Strategy, Option<Rational64>)> = joint_strategies(&fixed, n)
        .map(|s| {
            let bins: Vec<Bin> = s.iter().map(|i| i.outcome(0).bin).collect();
            let value = rule.selects(&bins).then(|| {
                let signs: Vec<[i8; 2]> = s.iter().map(|i| [i.0[0].sign, i.0[1].sign]).collect();
                Rational64::from_coeff(functional.deterministic_value(&signs)).abs()
            });
            (s, value)
        })
        .collect();
    let enumerated = scored.len();
    let (best, mu_max) = scored
        .into_iter()
        .filter_map(|(s, v)| v.map(|v| (s, v)))
        .fold(None::<(Strategy, Rational64)>, |acc, (s, v)| match acc {
            Some((_, bv)) if bv >= v => acc,
            _ => Some((s, v)),
        })
        .ok_or(Error::PostselectionEmpty)?;
    Ok(SearchResult {
        mu_max,
        witness: StrategyEnsemble::deterministic(best),
        strategies_enumerated: enumerated,
    })
}

/// Largest `|value|` over deterministic ±1 assignments with no postselection.
pub fn classical_bound(functional: &BellFunctional) -> f64 {
    let n = functional.n_parties();
    (0..1usize << (2 * n))
        .into_par_iter()
        .map(|bits| {
            let outcomes: Vec<[i8; 2]> = (0..n)
                .map(|k| {
                    let b = bits >> (2 * k);
                    [if b & 1 == 0 { 1 } else { -1 }, if b & 2 == 0 { 1 } else { -1 }]
                })
                .collect();
            functional.deterministic_value(&outcomes).abs()
        })
        .reduce(|| 0.0, f64::max)
}

/// Total weight of strategies whose selection changes when a single party
/// changes its setting; zero for models compatible with setting-independent
/// detection.
pub fn counterfactual_audit<W: Weight>(ensemble: &StrategyEnsemble<W>, rule: SelectionRule) -> W {
    let n = ensemble.n_parties();
    ensemble
        .entries()
        .iter()
        .filter(|(s, _)| {
            (0..1usize << n).any(|bits| {
                let settings: Vec<u8> = (0..n).map(|k| ((bits >> k) & 1) as u8).collect();
                let (sel, _) = strategy_outcome(s, &settings, rule);
                (0..n).any(|p| {
                    let mut other = settings.clone();
                    other[p] ^= 1;
                    strategy_outcome(s, &other, rule).0 != sel
                })
            })
        })
        .fold(W::zero(), |acc, (_, w)| acc + w.clone())
}

/// How settings are chosen per trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettingsSchedule {
    /// Independent fair coin per party.
    Uniform,
    /// Uniform over the listed joint settings.
    Cycle(Vec<Vec<u8>>),
    /// Same joint setting every trial.
    Fixed(Vec<u8>),
}

impl SettingsSchedule {
    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<u8> {
        match self {
            SettingsSchedule::Uniform => (0..n).map(|_| rng.random_range(0..2u8)).collect(),
            SettingsSchedule::Cycle(list) => list[rng.random_range(0..list.len())].clone(),
            SettingsSchedule::Fixed(s) => s.clone(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let ok = |s: &Vec<u8>| s.len() == n && s.iter().all(|&v| v < 2);
        let valid = match self {
            SettingsSchedule::Uniform => true,
            SettingsSchedule::Cycle(list) => !list.is_empty() && list.iter().all(ok),
            SettingsSchedule::Fixed(s) => ok(s),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::Parse(format!("settings schedule does not fit {n} parties")))
        }
    }
}

/// Samples `trials` events: per trial one joint strategy from the ensemble
/// and, independently, one joint setting from the schedule.
pub fn event_stream<W: Weight>(
    ensemble: &StrategyEnsemble<W>,
    rule: SelectionRule,
    schedule: &SettingsSchedule,
    trials: usize,
    seed: u64,
) -> Result<Vec<EventRecord>> {
    let n = ensemble.n_parties();
    schedule.validate(n)?;
    let weights: Vec<f64> = ensemble.entries().iter().map(|(_, w)| w.to_f64()).collect();
    let pick = WeightedIndex::new(&weights).map_err(|e| Error::InvalidEnsemble(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(trials * n);
    for trial in 0..trials {
        let strategy = &ensemble.entries()[pick.sample(&mut rng)].0;
        let settings = schedule.draw(n, &mut rng);
        let outcomes: Vec<Outcome> = strategy.iter().zip(&settings).map(|(i, &s)| i.outcome(s)).collect();
        let bins: Vec<Bin> = outcomes.iter().map(|o| o.bin).collect();
        let selected = rule.selects(&bins);
        out.extend(outcomes.iter().zip(&settings).enumerate().map(|(party, (o, &setting))| EventRecord {
            trial: trial as u64,
            party,
            setting,
            bin: o.bin,
            sign: o.sign,
            selected,
        }));
    }
    Ok(out)
}
