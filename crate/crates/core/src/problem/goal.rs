//! Output constraints in disjunctive normal form.
//!
//! Atoms are kept canonical so that structurally equal goals compare equal:
//! zero coefficients are dropped, every linear atom is scaled so that its
//! first coefficient is ±1, conjuncts are sorted sets and subsumed conjuncts
//! are absorbed. Contradictory conjuncts (`a ∧ ¬a`) are kept; treating each
//! atom and its negation as independent symbols is what makes double negation
//! return the original goal exactly.

use std::collections::BTreeMap;
use std::fmt;

use num::{Signed, Zero};

use crate::exact::{self, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    Input(usize),
    Output(usize),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Input(i) => write!(f, "x[{i}]"),
            Var::Output(j) => write!(f, "y[{j}]"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LinOp {
    Lt,
    Le,
}

/// `Σ cᵢ·vᵢ op bound`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinearAtom {
    pub coeffs: BTreeMap<Var, Rational>,
    pub op: LinOp,
    pub bound: Rational,
}

impl LinearAtom {
    /// Canonical atom, or its truth value when no variable is left.
    pub fn new(coeffs: BTreeMap<Var, Rational>, op: LinOp, bound: Rational) -> Result<LinearAtom, bool> {
        let coeffs: BTreeMap<Var, Rational> = coeffs.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        let Some(first) = coeffs.values().next() else {
            return Err(match op {
                LinOp::Lt => Rational::zero() < bound,
                LinOp::Le => Rational::zero() <= bound,
            });
        };
        let scale = first.abs();
        let coeffs = coeffs.into_iter().map(|(v, c)| (v, c / &scale)).collect();
        Ok(LinearAtom { coeffs, op, bound: bound / scale })
    }

    /// `¬(e < b)` is `-e ≤ -b`, and the other way round.
    pub fn negate(&self) -> LinearAtom {
        LinearAtom {
            coeffs: self.coeffs.iter().map(|(v, c)| (*v, -c)).collect(),
            op: match self.op {
                LinOp::Lt => LinOp::Le,
                LinOp::Le => LinOp::Lt,
            },
            bound: -&self.bound,
        }
    }

    pub fn mentions_output(&self) -> bool {
        self.coeffs.keys().any(|v| matches!(v, Var::Output(_)))
    }
}

impl fmt::Display for LinearAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (v, c)) in self.coeffs.iter().enumerate() {
            let neg = c.is_negative();
            let mag = c.abs();
            match (k, neg) {
                (0, true) => f.write_str("-")?,
                (0, false) => {}
                (_, true) => f.write_str(" - ")?,
                (_, false) => f.write_str(" + ")?,
            }
            if mag != Rational::from_integer(1.into()) {
                write!(f, "{}*", number(&mag))?;
            }
            write!(f, "{v}")?;
        }
        let op = match self.op {
            LinOp::Lt => "<",
            LinOp::Le => "<=",
        };
        write!(f, " {op} {}", number(&self.bound))
    }
}

fn number(r: &Rational) -> String {
    if exact::is_integer(r) {
        r.numer().to_string()
    } else {
        exact::display(r)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Linear(LinearAtom),
    /// Class `c` strictly beats every other class.
    ClassIs(usize),
    ClassIsNot(usize),
}

impl Atom {
    pub fn negate(&self) -> Atom {
        match self {
            Atom::Linear(a) => Atom::Linear(a.negate()),
            Atom::ClassIs(c) => Atom::ClassIsNot(*c),
            Atom::ClassIsNot(c) => Atom::ClassIs(*c),
        }
    }

    pub fn mentions_output(&self) -> bool {
        match self {
            Atom::Linear(a) => a.mentions_output(),
            Atom::ClassIs(_) | Atom::ClassIsNot(_) => true,
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Linear(a) => a.fmt(f),
            Atom::ClassIs(c) => write!(f, "class = {c}"),
            Atom::ClassIsNot(c) => write!(f, "class != {c}"),
        }
    }
}

/// `argmax(y) = c` as linear atoms: `y[j] - y[c] < 0` for every `j ≠ c`.
pub fn class_is_atoms(c: usize, num_classes: usize) -> Vec<LinearAtom> {
    (0..num_classes)
        .filter(|j| *j != c)
        .map(|j| {
            let coeffs = BTreeMap::from([(Var::Output(j), exact::from_i64(1)), (Var::Output(c), exact::from_i64(-1))]);
            LinearAtom::new(coeffs, LinOp::Lt, Rational::zero()).expect("two distinct variables")
        })
        .collect()
}

/// A disjunction of conjunctions. The empty disjunction is false; a
/// disjunction containing an empty conjunct is true.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NormalizedGoal {
    disjuncts: Vec<Vec<Atom>>,
}

impl NormalizedGoal {
    pub fn truth(value: bool) -> Self {
        NormalizedGoal { disjuncts: if value { vec![vec![]] } else { vec![] } }
    }

    pub fn atom(a: Atom) -> Self {
        NormalizedGoal { disjuncts: vec![vec![a]] }
    }

    pub fn from_disjuncts(disjuncts: Vec<Vec<Atom>>) -> Self {
        let mut g = NormalizedGoal { disjuncts };
        g.canonicalize();
        g
    }

    pub fn disjuncts(&self) -> &[Vec<Atom>] {
        &self.disjuncts
    }

    pub fn is_true(&self) -> bool {
        self.disjuncts.iter().any(Vec::is_empty)
    }

    pub fn is_false(&self) -> bool {
        self.disjuncts.is_empty()
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.disjuncts.iter().flatten()
    }

    fn canonicalize(&mut self) {
        for c in &mut self.disjuncts {
            c.sort();
            c.dedup();
        }
        self.disjuncts.sort();
        self.disjuncts.dedup();
        let subsumed = |small: &Vec<Atom>, big: &Vec<Atom>| {
            small.len() < big.len() && small.iter().all(|a| big.binary_search(a).is_ok())
        };
        let keep: Vec<bool> = self
            .disjuncts
            .iter()
            .map(|c| !self.disjuncts.iter().any(|d| subsumed(d, c)))
            .collect();
        let mut k = keep.into_iter();
        self.disjuncts.retain(|_| k.next().unwrap());
    }

    pub fn or(&self, other: &NormalizedGoal) -> NormalizedGoal {
        let mut d = self.disjuncts.clone();
        d.extend(other.disjuncts.iter().cloned());
        NormalizedGoal::from_disjuncts(d)
    }

    pub fn and(&self, other: &NormalizedGoal) -> NormalizedGoal {
        let mut d = Vec::with_capacity(self.disjuncts.len() * other.disjuncts.len());
        for a in &self.disjuncts {
            for b in &other.disjuncts {
                let mut c = a.clone();
                c.extend(b.iter().cloned());
                d.push(c);
            }
        }
        NormalizedGoal::from_disjuncts(d)
    }

    /// Negation pushed through De Morgan and redistributed into DNF.
    pub fn negate(&self) -> NormalizedGoal {
        let mut acc = NormalizedGoal::truth(true);
        for conj in &self.disjuncts {
            let clause = NormalizedGoal { disjuncts: conj.iter().map(|a| vec![a.negate()]).collect() };
            acc = acc.and(&NormalizedGoal::from_disjuncts(clause.disjuncts));
            if acc.is_false() {
                break;
            }
        }
        acc
    }

    /// Rewrites class atoms into linear atoms over `num_classes` outputs.
    pub fn linearize(&self, num_classes: usize) -> NormalizedGoal {
        let mut out = NormalizedGoal::truth(false);
        for conj in &self.disjuncts {
            let mut acc = NormalizedGoal::truth(true);
            for a in conj {
                let part = match a {
                    Atom::Linear(_) => NormalizedGoal::atom(a.clone()),
                    Atom::ClassIs(c) => NormalizedGoal {
                        disjuncts: vec![class_is_atoms(*c, num_classes).into_iter().map(Atom::Linear).collect()],
                    },
                    Atom::ClassIsNot(c) => NormalizedGoal {
                        disjuncts: class_is_atoms(*c, num_classes)
                            .into_iter()
                            .map(|l| vec![Atom::Linear(l.negate())])
                            .collect(),
                    },
                };
                acc = acc.and(&part);
            }
            out = out.or(&acc);
        }
        out
    }

    pub fn compile(&self) -> CompiledGoal {
        CompiledGoal {
            disjuncts: self.disjuncts.iter().map(|c| c.iter().map(CompiledAtom::new).collect()).collect(),
        }
    }
}

impl fmt::Display for NormalizedGoal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_false() {
            return f.write_str("false");
        }
        for (i, c) in self.disjuncts.iter().enumerate() {
            if i > 0 {
                f.write_str(" \\/ ")?;
            }
            if c.is_empty() {
                f.write_str("true")?;
            }
            let parens = self.disjuncts.len() > 1 && c.len() > 1;
            if parens {
                f.write_str("(")?;
            }
            for (k, a) in c.iter().enumerate() {
                if k > 0 {
                    f.write_str(" /\\ ")?;
                }
                write!(f, "{a}")?;
            }
            if parens {
                f.write_str(")")?;
            }
        }
        Ok(())
    }
}

/// Floating-point form of an atom for fast evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum CompiledAtom {
    Linear { coeffs: Vec<(Var, f64)>, strict: bool, bound: f64 },
    ClassIs(usize),
    ClassIsNot(usize),
}

impl CompiledAtom {
    fn new(a: &Atom) -> Self {
        match a {
            Atom::Linear(l) => CompiledAtom::Linear {
                coeffs: l.coeffs.iter().map(|(v, c)| (*v, exact::to_f64(c))).collect(),
                strict: l.op == LinOp::Lt,
                bound: exact::to_f64(&l.bound),
            },
            Atom::ClassIs(c) => CompiledAtom::ClassIs(*c),
            Atom::ClassIsNot(c) => CompiledAtom::ClassIsNot(*c),
        }
    }

    /// Positive when the atom holds with room to spare, negative when it fails.
    pub fn margin(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            CompiledAtom::Linear { coeffs, bound, .. } => {
                let e = coeffs.iter().fold(0.0, |acc, (v, c)| {
                    acc + c * match v {
                        Var::Input(i) => x[*i],
                        Var::Output(j) => y[*j],
                    }
                });
                bound - e
            }
            CompiledAtom::ClassIs(c) => {
                (0..y.len()).filter(|j| j != c).map(|j| y[*c] - y[j]).fold(f64::INFINITY, f64::min)
            }
            CompiledAtom::ClassIsNot(c) => {
                (0..y.len()).filter(|j| j != c).map(|j| y[j] - y[*c]).fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }

    pub fn holds(&self, x: &[f64], y: &[f64]) -> bool {
        let m = self.margin(x, y);
        match self {
            CompiledAtom::Linear { strict: true, .. } | CompiledAtom::ClassIs(_) => m > 0.0,
            _ => m >= 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledGoal {
    pub disjuncts: Vec<Vec<CompiledAtom>>,
}

impl CompiledGoal {
    /// Max over disjuncts of the min over atoms.
    pub fn margin(&self, x: &[f64], y: &[f64]) -> f64 {
        self.disjuncts
            .iter()
            .map(|c| c.iter().map(|a| a.margin(x, y)).fold(f64::INFINITY, f64::min))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn holds(&self, x: &[f64], y: &[f64]) -> bool {
        self.disjuncts.iter().any(|c| c.iter().all(|a| a.holds(x, y)))
    }
}
