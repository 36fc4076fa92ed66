//! Guard and computation-step expressions over integer, boolean and
//! symbolic (location-valued) variables.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A runtime value. `Sym` carries a location name and only supports
/// equality; it is how an instrumented component records its `loc`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Sym(String),
}

impl Value {
    pub fn ty(&self) -> Type {
        match self {
            Value::Int(_) => Type::Int,
            Value::Bool(_) => Type::Bool,
            Value::Sym(_) => Type::Sym,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Sym(s) => write!(f, "#{}", crate::syntax::quote_name(s)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Type {
    Int,
    Bool,
    Sym,
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Type::Int => "int",
            Type::Bool => "bool",
            Type::Sym => "location",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnOp {
    Not,
    Neg,
    Abs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Lt,
    Le,
    Eq,
    Ne,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }

    /// Binding strength; higher binds tighter.
    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Lt | BinOp::Le | BinOp::Eq | BinOp::Ne | BinOp::Gt | BinOp::Ge => 3,
            BinOp::Add | BinOp::Sub => 4,
            BinOp::Mul => 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Expr {
    Lit(Value),
    Var(String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn tt() -> Expr {
        Expr::Lit(Value::Bool(true))
    }

    pub fn int(i: i64) -> Expr {
        Expr::Lit(Value::Int(i))
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn sym(name: impl Into<String>) -> Expr {
        Expr::Lit(Value::Sym(name.into()))
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    pub fn abs(e: Expr) -> Expr {
        Expr::Unary(UnOp::Abs, Box::new(e))
    }

    pub fn is_true_literal(&self) -> bool {
        matches!(self, Expr::Lit(Value::Bool(true)))
    }

    /// Every variable name referenced, in first-occurrence order.
    pub fn vars(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Lit(_) => {}
            Expr::Var(v) => {
                if !out.contains(&v.as_str()) {
                    out.push(v);
                }
            }
            Expr::Unary(_, e) => e.collect_vars(out),
            Expr::Binary(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    /// Rewrites every variable name through `f`.
    pub fn map_vars(&self, f: &impl Fn(&str) -> String) -> Expr {
        match self {
            Expr::Lit(v) => Expr::Lit(v.clone()),
            Expr::Var(v) => Expr::Var(f(v)),
            Expr::Unary(op, e) => Expr::Unary(*op, Box::new(e.map_vars(f))),
            Expr::Binary(op, l, r) => Expr::Binary(*op, Box::new(l.map_vars(f)), Box::new(r.map_vars(f))),
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, outer: u8) -> fmt::Result {
        match self {
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Var(v) => f.write_str(v),
            Expr::Unary(UnOp::Abs, e) => {
                f.write_str("abs(")?;
                e.fmt_prec(f, 0)?;
                f.write_str(")")
            }
            Expr::Unary(UnOp::Not, e) => {
                f.write_str("not ")?;
                e.fmt_prec(f, 6)
            }
            // Always parenthesised so that `-(5)` stays distinct from the literal `-5`.
            Expr::Unary(UnOp::Neg, e) => {
                f.write_str("-(")?;
                e.fmt_prec(f, 0)?;
                f.write_str(")")
            }
            Expr::Binary(op, l, r) => {
                let p = op.precedence();
                let paren = p < outer;
                if paren {
                    f.write_str("(")?;
                }
                // Left-associative: the right operand needs strictly tighter binding.
                // Comparisons do not chain, so both sides bind tighter.
                let left_min = if p == 3 { p + 1 } else { p };
                l.fmt_prec(f, left_min)?;
                write!(f, " {} ", op.symbol())?;
                r.fmt_prec(f, p + 1)?;
                if paren {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

impl std::ops::Not for Expr {
    type Output = Expr;

    fn not(self) -> Expr {
        Expr::Unary(UnOp::Not, Box::new(self))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    pub target: String,
    pub source: Expr,
}

impl Assignment {
    pub fn new(target: impl Into<String>, source: Expr) -> Self {
        Assignment {
            target: target.into(),
            source,
        }
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} := {}", self.target, self.source)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("type mismatch in `{expr}`: expected {expected}, found {found}")]
    TypeMismatch { expr: String, expected: Type, found: Type },
    #[error("integer overflow evaluating `{0}`")]
    Overflow(String),
}

/// A total map from variable names to values.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Valuation(pub BTreeMap<String, Value>);

impl Valuation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.0.get(name)
    }

    pub fn set(&mut self, name: impl Into<String>, v: Value) {
        self.0.insert(name.into(), v);
    }

    pub fn with(mut self, name: impl Into<String>, v: Value) -> Self {
        self.set(name, v);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<(S, Value)> for Valuation {
    fn from_iter<T: IntoIterator<Item = (S, Value)>>(iter: T) -> Self {
        Valuation(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

/// Anything variables can be looked up in.
pub trait Env {
    fn lookup(&self, name: &str) -> Option<Value>;
}

impl Env for Valuation {
    fn lookup(&self, name: &str) -> Option<Value> {
        self.0.get(name).cloned()
    }
}

impl<F: Fn(&str) -> Option<Value>> Env for F {
    fn lookup(&self, name: &str) -> Option<Value> {
        self(name)
    }
}

pub fn eval(e: &Expr, env: &impl Env) -> Result<Value, ExprError> {
    match e {
        Expr::Lit(v) => Ok(v.clone()),
        Expr::Var(name) => env.lookup(name).ok_or_else(|| ExprError::UnboundVariable(name.clone())),
        Expr::Unary(op, inner) => {
            let v = eval(inner, env)?;
            match op {
                UnOp::Not => Ok(Value::Bool(!want_bool(&v, e)?)),
                UnOp::Neg => want_int(&v, e)?
                    .checked_neg()
                    .map(Value::Int)
                    .ok_or_else(|| ExprError::Overflow(e.to_string())),
                UnOp::Abs => want_int(&v, e)?
                    .checked_abs()
                    .map(Value::Int)
                    .ok_or_else(|| ExprError::Overflow(e.to_string())),
            }
        }
        Expr::Binary(op, l, r) => {
            // Short-circuit so that `false and <anything>` is total.
            if matches!(op, BinOp::And | BinOp::Or) {
                let lv = want_bool(&eval(l, env)?, e)?;
                return match (op, lv) {
                    (BinOp::And, false) => Ok(Value::Bool(false)),
                    (BinOp::Or, true) => Ok(Value::Bool(true)),
                    _ => Ok(Value::Bool(want_bool(&eval(r, env)?, e)?)),
                };
            }
            let lv = eval(l, env)?;
            let rv = eval(r, env)?;
            match op {
                BinOp::Eq | BinOp::Ne => {
                    if lv.ty() != rv.ty() {
                        return Err(ExprError::TypeMismatch {
                            expr: e.to_string(),
                            expected: lv.ty(),
                            found: rv.ty(),
                        });
                    }
                    Ok(Value::Bool((lv == rv) == (*op == BinOp::Eq)))
                }
                _ => {
                    let a = want_int(&lv, e)?;
                    let b = want_int(&rv, e)?;
                    let overflow = || ExprError::Overflow(e.to_string());
                    Ok(match op {
                        BinOp::Add => Value::Int(a.checked_add(b).ok_or_else(overflow)?),
                        BinOp::Sub => Value::Int(a.checked_sub(b).ok_or_else(overflow)?),
                        BinOp::Mul => Value::Int(a.checked_mul(b).ok_or_else(overflow)?),
                        BinOp::Lt => Value::Bool(a < b),
                        BinOp::Le => Value::Bool(a <= b),
                        BinOp::Gt => Value::Bool(a > b),
                        BinOp::Ge => Value::Bool(a >= b),
                        BinOp::Eq | BinOp::Ne | BinOp::And | BinOp::Or => unreachable!(),
                    })
                }
            }
        }
    }
}

pub fn eval_bool(e: &Expr, env: &impl Env) -> Result<bool, ExprError> {
    let v = eval(e, env)?;
    want_bool(&v, e)
}

fn want_bool(v: &Value, e: &Expr) -> Result<bool, ExprError> {
    v.as_bool().ok_or_else(|| ExprError::TypeMismatch {
        expr: e.to_string(),
        expected: Type::Bool,
        found: v.ty(),
    })
}

fn want_int(v: &Value, e: &Expr) -> Result<i64, ExprError> {
    v.as_int().ok_or_else(|| ExprError::TypeMismatch {
        expr: e.to_string(),
        expected: Type::Int,
        found: v.ty(),
    })
}

/// Static type of `e`, given the declared types of its variables.
pub fn type_of(e: &Expr, types: &impl Fn(&str) -> Option<Type>) -> Result<Type, ExprError> {
    let mismatch = |expected: Type, found: Type| ExprError::TypeMismatch {
        expr: e.to_string(),
        expected,
        found,
    };
    match e {
        Expr::Lit(v) => Ok(v.ty()),
        Expr::Var(name) => types(name).ok_or_else(|| ExprError::UnboundVariable(name.clone())),
        Expr::Unary(op, inner) => {
            let t = type_of(inner, types)?;
            let want = if *op == UnOp::Not { Type::Bool } else { Type::Int };
            if t != want {
                return Err(mismatch(want, t));
            }
            Ok(want)
        }
        Expr::Binary(op, l, r) => {
            let lt = type_of(l, types)?;
            let rt = type_of(r, types)?;
            match op {
                BinOp::And | BinOp::Or => {
                    for t in [lt, rt] {
                        if t != Type::Bool {
                            return Err(mismatch(Type::Bool, t));
                        }
                    }
                    Ok(Type::Bool)
                }
                BinOp::Eq | BinOp::Ne => {
                    if lt != rt {
                        return Err(mismatch(lt, rt));
                    }
                    Ok(Type::Bool)
                }
                _ => {
                    for t in [lt, rt] {
                        if t != Type::Int {
                            return Err(mismatch(Type::Int, t));
                        }
                    }
                    Ok(if matches!(op, BinOp::Add | BinOp::Sub | BinOp::Mul) {
                        Type::Int
                    } else {
                        Type::Bool
                    })
                }
            }
        }
    }
}

/// Applies `f` left to right; each assignment sees the effects of the
/// previous ones.
pub fn apply_assignments(f: &[Assignment], v: &Valuation) -> Result<Valuation, ExprError> {
    let mut out = v.clone();
    for a in f {
        if !out.0.contains_key(&a.target) {
            return Err(ExprError::UnboundVariable(a.target.clone()));
        }
        let val = eval(&a.source, &out)?;
        out.0.insert(a.target.clone(), val);
    }
    Ok(out)
}

/// `v` overridden by `w`: `w(x)` where `w` is defined, `v(x)` elsewhere.
pub fn override_with(v: &Valuation, w: &Valuation) -> Valuation {
    let mut out = v.clone();
    for (k, val) in &w.0 {
        out.0.insert(k.clone(), val.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_expr;
    use proptest::prelude::*;

    fn val(pairs: &[(&str, i64)]) -> Valuation {
        pairs.iter().map(|(k, v)| (*k, Value::Int(*v))).collect()
    }

    #[test]
    fn worker_guard() {
        let e = parse_expr("x <= 10").unwrap();
        assert_eq!(eval(&e, &val(&[("x", 3)])).unwrap(), Value::Bool(true));
        let e = parse_expr("x > 10").unwrap();
        assert_eq!(eval(&e, &val(&[("x", 0)])).unwrap(), Value::Bool(false));
    }

    #[test]
    fn abs_difference() {
        let e = parse_expr("abs(a - b) < 3").unwrap();
        assert_eq!(eval(&e, &val(&[("a", 5), ("b", 4)])).unwrap(), Value::Bool(true));
    }

    #[test]
    fn errors() {
        let e = parse_expr("y + 1").unwrap();
        assert_eq!(eval(&e, &val(&[("x", 1)])), Err(ExprError::UnboundVariable("y".into())));
        let e = parse_expr("x + 1").unwrap();
        assert!(matches!(
            eval(&e, &val(&[("x", i64::MAX)])),
            Err(ExprError::Overflow(_))
        ));
        let e = parse_expr("x and true").unwrap();
        assert!(matches!(
            eval(&e, &val(&[("x", 1)])),
            Err(ExprError::TypeMismatch { .. })
        ));
        assert!(matches!(
            eval(&parse_expr("abs(x)").unwrap(), &val(&[("x", i64::MIN)])),
            Err(ExprError::Overflow(_))
        ));
    }

    #[test]
    fn assignments_left_to_right() {
        let inc = vec![Assignment::new("x", parse_expr("x + 1").unwrap())];
        assert_eq!(apply_assignments(&inc, &val(&[("x", 0)])).unwrap(), val(&[("x", 1)]));
        assert_eq!(apply_assignments(&[], &val(&[("x", 7)])).unwrap(), val(&[("x", 7)]));
        let two = vec![
            Assignment::new("x", parse_expr("x + 1").unwrap()),
            Assignment::new("y", parse_expr("x").unwrap()),
        ];
        assert_eq!(
            apply_assignments(&two, &val(&[("x", 1), ("y", 0)])).unwrap(),
            val(&[("x", 2), ("y", 2)])
        );
        let bad = vec![Assignment::new("z", Expr::int(1))];
        assert!(apply_assignments(&bad, &val(&[("x", 1)])).is_err());
    }

    #[test]
    fn override_cases() {
        assert_eq!(
            override_with(&val(&[("x", 1), ("y", 2)]), &val(&[("y", 9)])),
            val(&[("x", 1), ("y", 9)])
        );
        let v = val(&[("x", 4)]);
        assert_eq!(override_with(&v, &Valuation::new()), v);
        assert_eq!(override_with(&Valuation::new(), &val(&[("z", 3)])), val(&[("z", 3)]));
    }

    #[test]
    fn typing() {
        let types = |n: &str| match n {
            "x" => Some(Type::Int),
            "b" => Some(Type::Bool),
            "loc" => Some(Type::Sym),
            _ => None,
        };
        assert_eq!(type_of(&parse_expr("x + 1 < 3 and b").unwrap(), &types), Ok(Type::Bool));
        assert_eq!(type_of(&parse_expr("loc == #done").unwrap(), &types), Ok(Type::Bool));
        assert!(type_of(&parse_expr("loc < 1").unwrap(), &types).is_err());
        assert!(type_of(&parse_expr("not x").unwrap(), &types).is_err());
        assert!(matches!(
            type_of(&parse_expr("q").unwrap(), &types),
            Err(ExprError::UnboundVariable(_))
        ));
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-50i64..50).prop_map(Expr::int),
            prop_oneof![Just("x"), Just("y")].prop_map(Expr::var),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::bin(BinOp::Add, a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::bin(BinOp::Sub, a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::bin(BinOp::Mul, a, b)),
                inner.clone().prop_map(Expr::abs),
                inner.prop_map(|a| Expr::Unary(UnOp::Neg, Box::new(a))),
            ]
        })
    }

    fn arb_assignments() -> impl Strategy<Value = Vec<Assignment>> {
        proptest::collection::vec(
            (prop_oneof![Just("x"), Just("y")], arb_expr()).prop_map(|(t, e)| Assignment::new(t, e)),
            0..4,
        )
    }

    proptest! {
        #[test]
        fn printing_round_trips(e in arb_expr()) {
            let printed = e.to_string();
            prop_assert_eq!(parse_expr(&printed).unwrap(), e);
        }

        #[test]
        fn assignment_sequences_compose(
            f1 in arb_assignments(), f2 in arb_assignments(), x in -20i64..20, y in -20i64..20
        ) {
            let v = val(&[("x", x), ("y", y)]);
            let stepwise = apply_assignments(&f1, &v).and_then(|w| apply_assignments(&f2, &w));
            let joined: Vec<_> = f1.iter().chain(f2.iter()).cloned().collect();
            prop_assert_eq!(stepwise, apply_assignments(&joined, &v));
        }

        #[test]
        fn override_law(a in -5i64..5, b in -5i64..5, c in -5i64..5, in_w in any::<bool>()) {
            let v = val(&[("x", a), ("y", b)]);
            let w = if in_w { val(&[("y", c)]) } else { val(&[("z", c)]) };
            let o = override_with(&v, &w);
            for k in ["x", "y", "z"] {
                let expected = w.get(k).or(v.get(k));
                prop_assert_eq!(o.get(k), expected);
            }
        }
    }
}
