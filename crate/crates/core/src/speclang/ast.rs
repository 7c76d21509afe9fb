use std::fmt;

/// 1-based source position.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Span { line, col }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sort {
    Real,
    Int,
    Vector(usize),
    Label,
}

impl Sort {
    pub fn is_numeric(self) -> bool {
        matches!(self, Sort::Real | Sort::Int)
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sort::Real => f.write_str("real"),
            Sort::Int => f.write_str("int"),
            Sort::Vector(n) => write!(f, "vector {n}"),
            Sort::Label => f.write_str("label"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }
}

/// What a quantified variable ranges over.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantDomain {
    Sort(Sort),
    /// `forall a in D.`: the rows of an imported dataset.
    Dataset(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub kind: TermKind,
    pub span: Span,
    /// Filled in by the typechecker.
    pub sort: Option<Sort>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TermKind {
    Var(String),
    /// Exact decimal text as written.
    Real(String),
    Int(i64),
    Add(Box<Term>, Box<Term>),
    Sub(Box<Term>, Box<Term>),
    Mul(Box<Term>, Box<Term>),
    Neg(Box<Term>),
    Apply { model: String, arg: Box<Term> },
    Index(Box<Term>, Box<Term>),
    ArgMax(Box<Term>),
}

impl Term {
    pub fn new(kind: TermKind, span: Span) -> Self {
        Term { kind, span, sort: None }
    }

    pub fn with_sort(kind: TermKind, span: Span, sort: Sort) -> Self {
        Term { kind, span, sort: Some(sort) }
    }

    pub fn var(name: impl Into<String>, span: Span) -> Self {
        Term::new(TermKind::Var(name.into()), span)
    }

    fn children_mut(&mut self) -> Vec<&mut Term> {
        match &mut self.kind {
            TermKind::Var(_) | TermKind::Real(_) | TermKind::Int(_) => vec![],
            TermKind::Add(a, b) | TermKind::Sub(a, b) | TermKind::Mul(a, b) | TermKind::Index(a, b) => {
                vec![a.as_mut(), b.as_mut()]
            }
            TermKind::Neg(a) | TermKind::ArgMax(a) | TermKind::Apply { arg: a, .. } => vec![a.as_mut()],
        }
    }

    pub(crate) fn erase_metadata(&mut self) {
        self.span = Span::default();
        self.sort = None;
        for child in self.children_mut() {
            child.erase_metadata();
        }
    }

    pub fn visit_vars(&self, f: &mut dyn FnMut(&str)) {
        match &self.kind {
            TermKind::Var(name) => f(name),
            TermKind::Real(_) | TermKind::Int(_) => {}
            TermKind::Add(a, b) | TermKind::Sub(a, b) | TermKind::Mul(a, b) | TermKind::Index(a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
            TermKind::Neg(a) | TermKind::ArgMax(a) | TermKind::Apply { arg: a, .. } => a.visit_vars(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Formula {
    pub kind: FormulaKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FormulaKind {
    Bool(bool),
    Forall { var: String, domain: QuantDomain, body: Box<Formula> },
    Exists { var: String, domain: QuantDomain, body: Box<Formula> },
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Not(Box<Formula>),
    Compare { op: CmpOp, lhs: Term, rhs: Term },
    PredApply { name: String, args: Vec<Term> },
}

impl Formula {
    pub fn new(kind: FormulaKind, span: Span) -> Self {
        Formula { kind, span }
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        let span = a.span;
        Formula::new(FormulaKind::And(Box::new(a), Box::new(b)), span)
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        let span = a.span;
        Formula::new(FormulaKind::Or(Box::new(a), Box::new(b)), span)
    }

    /// Right-nested conjunction; `true` when empty.
    pub fn conjunction(parts: Vec<Formula>, span: Span) -> Formula {
        let mut iter = parts.into_iter().rev();
        match iter.next() {
            None => Formula::new(FormulaKind::Bool(true), span),
            Some(last) => iter.fold(last, |acc, f| Formula::and(f, acc)),
        }
    }

    /// Right-nested disjunction; `false` when empty.
    pub fn disjunction(parts: Vec<Formula>, span: Span) -> Formula {
        let mut iter = parts.into_iter().rev();
        match iter.next() {
            None => Formula::new(FormulaKind::Bool(false), span),
            Some(last) => iter.fold(last, |acc, f| Formula::or(f, acc)),
        }
    }

    pub(crate) fn erase_metadata(&mut self) {
        self.span = Span::default();
        match &mut self.kind {
            FormulaKind::Bool(_) => {}
            FormulaKind::Forall { body, .. } | FormulaKind::Exists { body, .. } | FormulaKind::Not(body) => {
                body.erase_metadata()
            }
            FormulaKind::And(a, b) | FormulaKind::Or(a, b) | FormulaKind::Implies(a, b) => {
                a.erase_metadata();
                b.erase_metadata();
            }
            FormulaKind::Compare { lhs, rhs, .. } => {
                lhs.erase_metadata();
                rhs.erase_metadata();
            }
            FormulaKind::PredApply { args, .. } => args.iter_mut().for_each(Term::erase_metadata),
        }
    }

    /// Copy with spans and sort annotations cleared, for structural comparison.
    pub fn structure(&self) -> Formula {
        let mut copy = self.clone();
        copy.erase_metadata();
        copy
    }

    pub fn contains_pred_apply(&self) -> bool {
        match &self.kind {
            FormulaKind::PredApply { .. } => true,
            FormulaKind::Bool(_) | FormulaKind::Compare { .. } => false,
            FormulaKind::Forall { body, .. } | FormulaKind::Exists { body, .. } | FormulaKind::Not(body) => {
                body.contains_pred_apply()
            }
            FormulaKind::And(a, b) | FormulaKind::Or(a, b) | FormulaKind::Implies(a, b) => {
                a.contains_pred_apply() || b.contains_pred_apply()
            }
        }
    }

    /// Whether some binder reuses a name already bound on its root-to-leaf path.
    pub fn has_shadowed_binder(&self) -> bool {
        fn walk(f: &Formula, bound: &mut Vec<String>) -> bool {
            match &f.kind {
                FormulaKind::Forall { var, body, .. } | FormulaKind::Exists { var, body, .. } => {
                    if bound.contains(var) {
                        return true;
                    }
                    bound.push(var.clone());
                    let found = walk(body, bound);
                    bound.pop();
                    found
                }
                FormulaKind::Not(a) => walk(a, bound),
                FormulaKind::And(a, b) | FormulaKind::Or(a, b) | FormulaKind::Implies(a, b) => {
                    walk(a, bound) || walk(b, bound)
                }
                _ => false,
            }
        }
        walk(self, &mut Vec::new())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub sort: Sort,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredicateDef {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Formula,
    pub span: Span,
}

/// `model M from "path"` or `dataset D from "path" [labeled]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Import {
    pub name: String,
    pub path: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetImport {
    pub name: String,
    pub path: String,
    pub labeled: bool,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Goal {
    pub name: String,
    pub body: Formula,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpecModule {
    pub imports: Vec<Import>,
    pub datasets: Vec<DatasetImport>,
    pub predicates: Vec<PredicateDef>,
    pub goals: Vec<Goal>,
}

impl SpecModule {
    /// Copy with every span and sort annotation cleared.
    pub fn structure(&self) -> SpecModule {
        let mut copy = self.clone();
        for import in &mut copy.imports {
            import.span = Span::default();
        }
        for dataset in &mut copy.datasets {
            dataset.span = Span::default();
        }
        for pred in &mut copy.predicates {
            pred.span = Span::default();
            pred.params.iter_mut().for_each(|p| p.span = Span::default());
            pred.body.erase_metadata();
        }
        for goal in &mut copy.goals {
            goal.span = Span::default();
            goal.body.erase_metadata();
        }
        copy
    }

    pub fn goal(&self, name: &str) -> Option<&Goal> {
        self.goals.iter().find(|g| g.name == name)
    }
}
