//! Tree-walking evaluator for TwinQL.
//!
//! Every node evaluation costs one step, and builtins that walk or build a
//! list cost one step per element, so evaluation always halts within
//! [`EvalLimits::step_budget`] steps.

use std::cmp::Ordering;
use std::collections::HashSet;

use thiserror::Error;

use super::ast::{Arg, BinaryOp, Expr, ExprKind, Pos, UnaryOp};
use super::value::Value;
use crate::twin::{ObjectInstance, VideoTwin};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalLimits {
    pub step_budget: u64,
    pub list_cap: usize,
}

impl Default for EvalLimits {
    fn default() -> Self {
        Self {
            step_budget: 100_000,
            list_cap: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("step budget of {budget} exceeded")]
    BudgetExceeded { budget: u64 },
    #[error("list longer than the cap of {cap} elements")]
    ListCapExceeded { cap: usize },
    #[error("type error at {pos} in {node}: expected {expected}, got {got}")]
    TypeError {
        pos: Pos,
        node: String,
        expected: String,
        got: String,
    },
    #[error("unknown identifier `{name}` at {pos}")]
    UnknownIdentifier { pos: Pos, name: String },
    #[error("frame {frame} out of range at {pos} (twin has {frame_count} frames)")]
    FrameOutOfRange { pos: Pos, frame: i64, frame_count: usize },
    #[error("no object {id} in frame {frame} at {pos}")]
    MissingObject { pos: Pos, frame: i64, id: i64 },
    #[error("index {index} out of range for list of length {len} at {pos}")]
    IndexOutOfRange { pos: Pos, index: i64, len: usize },
    #[error("arithmetic error at {pos}: {message}")]
    Arithmetic { pos: Pos, message: String },
}

/// Evaluates a parsed program against a twin.
pub fn evaluate(ast: &Expr, twin: &VideoTwin, limits: &EvalLimits) -> Result<Value, EvalError> {
    let mut ev = Evaluator {
        twin,
        limits,
        steps: 0,
        scope: Vec::new(),
    };
    ev.eval(ast)
}

const HIGHER_ORDER: &[&str] = &["filter", "min_by", "max_by", "sort_by"];

fn params(name: &str) -> Option<&'static [&'static str]> {
    Some(match name {
        "objects" => &["frame"],
        "frames" => &[],
        "count" | "len" | "leftmost" | "rightmost" | "nearest" | "farthest" | "largest" | "smallest" | "sum"
        | "mean" | "min" | "max" | "unique" => &["list"],
        "obj" => &["frame", "id"],
        "attr" => &["object", "name"],
        "attributes" | "category" | "id" | "frame" | "x" | "y" | "depth" | "size" => &["object"],
        "has_attribute" => &["object", "text"],
        "distance" => &["a", "b"],
        "frames_present" => &["id"],
        "displacement" => &["id", "t1", "t2"],
        "abs" => &["value"],
        _ => return None,
    })
}

/// Names callable from programs.
pub fn builtin_names() -> Vec<&'static str> {
    let mut names: Vec<&'static str> = [
        "objects",
        "frames",
        "count",
        "len",
        "leftmost",
        "rightmost",
        "nearest",
        "farthest",
        "largest",
        "smallest",
        "sum",
        "mean",
        "min",
        "max",
        "unique",
        "obj",
        "attr",
        "attributes",
        "category",
        "id",
        "frame",
        "x",
        "y",
        "depth",
        "size",
        "has_attribute",
        "distance",
        "frames_present",
        "displacement",
        "abs",
    ]
    .to_vec();
    names.extend(HIGHER_ORDER);
    names
}

fn is_builtin(name: &str) -> bool {
    params(name).is_some() || HIGHER_ORDER.contains(&name)
}

enum Callable<'e> {
    Builtin(&'e str),
    Lambda { param: &'e str, body: &'e Expr },
}

struct Evaluator<'a> {
    twin: &'a VideoTwin,
    limits: &'a EvalLimits,
    steps: u64,
    scope: Vec<(String, Value)>,
}

fn type_error(expr: &Expr, expected: &str, got: &Value) -> EvalError {
    EvalError::TypeError {
        pos: expr.pos,
        node: expr.label(),
        expected: expected.to_string(),
        got: got.type_name().to_string(),
    }
}

fn call_error(name: &str, pos: Pos, expected: impl Into<String>, got: impl Into<String>) -> EvalError {
    EvalError::TypeError {
        pos,
        node: format!("call `{name}`"),
        expected: expected.into(),
        got: got.into(),
    }
}

fn tie_rank(value: &Value) -> Option<(u64, usize)> {
    match value {
        Value::ObjRef { frame, id } => Some((*id, *frame)),
        _ => None,
    }
}

impl<'a> Evaluator<'a> {
    fn charge(&mut self, steps: u64) -> Result<(), EvalError> {
        self.steps = self.steps.saturating_add(steps);
        if self.steps > self.limits.step_budget {
            return Err(EvalError::BudgetExceeded {
                budget: self.limits.step_budget,
            });
        }
        Ok(())
    }

    fn list(&mut self, items: Vec<Value>) -> Result<Value, EvalError> {
        if items.len() > self.limits.list_cap {
            return Err(EvalError::ListCapExceeded {
                cap: self.limits.list_cap,
            });
        }
        Ok(Value::List(items))
    }

    fn lookup(&self, name: &str) -> Option<&Value> {
        self.scope.iter().rev().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    fn eval(&mut self, expr: &Expr) -> Result<Value, EvalError> {
        self.charge(1)?;
        match &expr.kind {
            ExprKind::Int(v) => Ok(Value::Int(*v)),
            ExprKind::Float(v) => Ok(Value::Float(*v)),
            ExprKind::Str(s) => Ok(Value::Str(s.clone())),
            ExprKind::Bool(b) => Ok(Value::Bool(*b)),
            ExprKind::Ident(name) => match self.lookup(name) {
                Some(v) => Ok(v.clone()),
                None if is_builtin(name) => Err(EvalError::TypeError {
                    pos: expr.pos,
                    node: expr.label(),
                    expected: "a value".into(),
                    got: "function (only valid as a key or predicate argument)".into(),
                }),
                None => Err(EvalError::UnknownIdentifier {
                    pos: expr.pos,
                    name: name.clone(),
                }),
            },
            ExprKind::Lambda { .. } => Err(EvalError::TypeError {
                pos: expr.pos,
                node: expr.label(),
                expected: "a value".into(),
                got: "lambda (only valid as a key or predicate argument)".into(),
            }),
            ExprKind::Unary { op, operand } => {
                let v = self.eval(operand)?;
                match (op, v) {
                    (UnaryOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
                    (UnaryOp::Neg, Value::Int(i)) => {
                        i.checked_neg().map(Value::Int).ok_or_else(|| EvalError::Arithmetic {
                            pos: expr.pos,
                            message: "integer overflow".into(),
                        })
                    }
                    (UnaryOp::Neg, Value::Float(f)) => Ok(Value::Float(-f)),
                    (UnaryOp::Not, other) => Err(type_error(expr, "bool", &other)),
                    (UnaryOp::Neg, other) => Err(type_error(expr, "number", &other)),
                }
            }
            ExprKind::Binary { op, lhs, rhs } => self.binary(expr, *op, lhs, rhs),
            ExprKind::List(items) => {
                let values = items.iter().map(|e| self.eval(e)).collect::<Result<Vec<_>, _>>()?;
                self.list(values)
            }
            ExprKind::Comprehension {
                element,
                var,
                source,
                condition,
            } => {
                let items = match self.eval(source)? {
                    Value::List(items) => items,
                    other => return Err(type_error(source, "list", &other)),
                };
                let mut out = Vec::new();
                for item in items {
                    self.scope.push((var.clone(), item));
                    let keep = match condition {
                        Some(cond) => match self.eval(cond) {
                            Ok(Value::Bool(b)) => Ok(b),
                            Ok(other) => Err(type_error(cond, "bool", &other)),
                            Err(e) => Err(e),
                        },
                        None => Ok(true),
                    };
                    let result = keep.and_then(|keep| if keep { self.eval(element).map(Some) } else { Ok(None) });
                    self.scope.pop();
                    if let Some(v) = result? {
                        out.push(v);
                        if out.len() > self.limits.list_cap {
                            return Err(EvalError::ListCapExceeded {
                                cap: self.limits.list_cap,
                            });
                        }
                    }
                }
                Ok(Value::List(out))
            }
            ExprKind::Index { target, index } => {
                let list = match self.eval(target)? {
                    Value::List(items) => items,
                    other => return Err(type_error(target, "list", &other)),
                };
                let i = match self.eval(index)? {
                    Value::Int(i) => i,
                    other => return Err(type_error(index, "int", &other)),
                };
                let len = list.len();
                let resolved = if i < 0 { len as i64 + i } else { i };
                if resolved < 0 || resolved >= len as i64 {
                    return Err(EvalError::IndexOutOfRange {
                        pos: expr.pos,
                        index: i,
                        len,
                    });
                }
                Ok(list.into_iter().nth(resolved as usize).expect("index checked"))
            }
            ExprKind::Call { name, args } => self.call(expr, name, args),
        }
    }

    fn binary(&mut self, expr: &Expr, op: BinaryOp, lhs: &Expr, rhs: &Expr) -> Result<Value, EvalError> {
        if matches!(op, BinaryOp::And | BinaryOp::Or) {
            let l = match self.eval(lhs)? {
                Value::Bool(b) => b,
                other => return Err(type_error(lhs, "bool", &other)),
            };
            if (op == BinaryOp::And && !l) || (op == BinaryOp::Or && l) {
                return Ok(Value::Bool(l));
            }
            return match self.eval(rhs)? {
                Value::Bool(b) => Ok(Value::Bool(b)),
                other => Err(type_error(rhs, "bool", &other)),
            };
        }
        let l = self.eval(lhs)?;
        let r = self.eval(rhs)?;
        let arith = |message: &str| EvalError::Arithmetic {
            pos: expr.pos,
            message: message.to_string(),
        };
        let mismatch = |expected: &str| EvalError::TypeError {
            pos: expr.pos,
            node: expr.label(),
            expected: expected.to_string(),
            got: format!("{} and {}", l.type_name(), r.type_name()),
        };
        match op {
            BinaryOp::Eq => Ok(Value::Bool(values_equal(&l, &r))),
            BinaryOp::Ne => Ok(Value::Bool(!values_equal(&l, &r))),
            BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => {
                let ord = compare_keys(&l, &r).ok_or_else(|| mismatch("two numbers or two strings"))?;
                Ok(Value::Bool(match op {
                    BinaryOp::Lt => ord == Ordering::Less,
                    BinaryOp::Le => ord != Ordering::Greater,
                    BinaryOp::Gt => ord == Ordering::Greater,
                    _ => ord != Ordering::Less,
                }))
            }
            BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div | BinaryOp::Rem => match (&l, &r) {
                (Value::Str(a), Value::Str(b)) if op == BinaryOp::Add => Ok(Value::Str(format!("{a}{b}"))),
                (Value::List(a), Value::List(b)) if op == BinaryOp::Add => {
                    self.charge((a.len() + b.len()) as u64)?;
                    self.list(a.iter().chain(b).cloned().collect())
                }
                (Value::Int(a), Value::Int(b)) => {
                    let (a, b) = (*a, *b);
                    match op {
                        BinaryOp::Add => a
                            .checked_add(b)
                            .map(Value::Int)
                            .ok_or_else(|| arith("integer overflow")),
                        BinaryOp::Sub => a
                            .checked_sub(b)
                            .map(Value::Int)
                            .ok_or_else(|| arith("integer overflow")),
                        BinaryOp::Mul => a
                            .checked_mul(b)
                            .map(Value::Int)
                            .ok_or_else(|| arith("integer overflow")),
                        BinaryOp::Div if b == 0 => Err(arith("division by zero")),
                        BinaryOp::Div => Ok(Value::Float(a as f64 / b as f64)),
                        _ if b == 0 => Err(arith("modulo by zero")),
                        _ => {
                            let mut m = a.checked_rem(b).ok_or_else(|| arith("integer overflow"))?;
                            if m != 0 && (m < 0) != (b < 0) {
                                m += b;
                            }
                            Ok(Value::Int(m))
                        }
                    }
                }
                _ => {
                    let (Some(a), Some(b)) = (l.as_number(), r.as_number()) else {
                        return Err(mismatch("numbers"));
                    };
                    let v = match op {
                        BinaryOp::Add => a + b,
                        BinaryOp::Sub => a - b,
                        BinaryOp::Mul => a * b,
                        BinaryOp::Div if b == 0.0 => return Err(arith("division by zero")),
                        BinaryOp::Div => a / b,
                        _ if b == 0.0 => return Err(arith("modulo by zero")),
                        _ => a - b * (a / b).floor(),
                    };
                    if v.is_finite() {
                        Ok(Value::Float(v))
                    } else {
                        Err(arith("float overflow"))
                    }
                }
            },
            BinaryOp::And | BinaryOp::Or => unreachable!("handled above"),
        }
    }

    fn callable<'e>(&self, arg: &'e Expr, name: &str) -> Result<Callable<'e>, EvalError> {
        match &arg.kind {
            ExprKind::Lambda { param, body } => Ok(Callable::Lambda { param, body }),
            ExprKind::Ident(f) if self.lookup(f).is_none() && params(f).is_some() => Ok(Callable::Builtin(f)),
            ExprKind::Ident(f) if self.lookup(f).is_none() => Err(EvalError::UnknownIdentifier {
                pos: arg.pos,
                name: f.clone(),
            }),
            _ => Err(EvalError::TypeError {
                pos: arg.pos,
                node: format!("call `{name}`"),
                expected: "a builtin name or lambda".into(),
                got: arg.label(),
            }),
        }
    }

    fn apply(&mut self, f: &Callable<'_>, value: Value, pos: Pos) -> Result<Value, EvalError> {
        match f {
            Callable::Builtin(name) => {
                self.charge(1)?;
                self.builtin(name, vec![Some(value)], pos)
            }
            Callable::Lambda { param, body } => {
                self.scope.push((param.to_string(), value));
                let result = self.eval(body);
                self.scope.pop();
                result
            }
        }
    }

    fn bind<'e>(
        &self,
        name: &str,
        names: &[&str],
        args: &'e [Arg],
        pos: Pos,
    ) -> Result<Vec<Option<&'e Expr>>, EvalError> {
        let mut slots: Vec<Option<&Expr>> = vec![None; names.len()];
        let mut positional = 0;
        for arg in args {
            let slot = match &arg.name {
                Some(key) => names.iter().position(|n| n == key).ok_or_else(|| {
                    call_error(
                        name,
                        arg.value.pos,
                        format!("parameters {names:?}"),
                        format!("keyword `{key}`"),
                    )
                })?,
                None => {
                    positional += 1;
                    positional - 1
                }
            };
            if slot >= names.len() {
                return Err(call_error(
                    name,
                    pos,
                    format!("at most {} arguments", names.len()),
                    format!("{}", args.len()),
                ));
            }
            if slots[slot].is_some() {
                return Err(call_error(
                    name,
                    arg.value.pos,
                    "each argument once",
                    format!("`{}` twice", names[slot]),
                ));
            }
            slots[slot] = Some(&arg.value);
        }
        Ok(slots)
    }

    fn call(&mut self, expr: &Expr, name: &str, args: &[Arg]) -> Result<Value, EvalError> {
        if HIGHER_ORDER.contains(&name) {
            let second = if name == "filter" { "predicate" } else { "key" };
            let slots = self.bind(name, &["list", second], args, expr.pos)?;
            let (Some(list_expr), Some(f_expr)) = (slots[0], slots[1]) else {
                return Err(call_error(name, expr.pos, "2 arguments", format!("{}", args.len())));
            };
            let items = match self.eval(list_expr)? {
                Value::List(items) => items,
                other => return Err(type_error(list_expr, "list", &other)),
            };
            let f = self.callable(f_expr, name)?;
            return self.higher_order(name, items, &f, expr.pos);
        }
        let Some(names) = params(name) else {
            return Err(EvalError::UnknownIdentifier {
                pos: expr.pos,
                name: name.to_string(),
            });
        };
        let slots = self.bind(name, names, args, expr.pos)?;
        let mut values = Vec::with_capacity(slots.len());
        for slot in slots {
            values.push(match slot {
                Some(e) => Some(self.eval(e)?),
                None => None,
            });
        }
        self.builtin(name, values, expr.pos)
    }

    fn higher_order(&mut self, name: &str, items: Vec<Value>, f: &Callable<'_>, pos: Pos) -> Result<Value, EvalError> {
        match name {
            "filter" => {
                let mut out = Vec::new();
                for item in items {
                    match self.apply(f, item.clone(), pos)? {
                        Value::Bool(true) => out.push(item),
                        Value::Bool(false) => {}
                        other => return Err(call_error(name, pos, "predicate returning bool", other.type_name())),
                    }
                }
                Ok(Value::List(out))
            }
            _ => {
                let mut keyed = Vec::with_capacity(items.len());
                for item in items {
                    let key = self.apply(f, item.clone(), pos)?;
                    keyed.push((key, item));
                }
                match name {
                    "min_by" => extreme_by(keyed, false, name, pos),
                    "max_by" => extreme_by(keyed, true, name, pos),
                    _ => {
                        self.charge(keyed.len() as u64)?;
                        let mut failed = false;
                        keyed.sort_by(|(ka, va), (kb, vb)| {
                            compare_keys(ka, kb)
                                .unwrap_or_else(|| {
                                    failed = true;
                                    Ordering::Equal
                                })
                                .then_with(|| match (tie_rank(va), tie_rank(vb)) {
                                    (Some(a), Some(b)) => a.cmp(&b),
                                    _ => Ordering::Equal,
                                })
                        });
                        if failed {
                            return Err(call_error(name, pos, "comparable keys", "mixed key types"));
                        }
                        Ok(Value::List(keyed.into_iter().map(|(_, v)| v).collect()))
                    }
                }
            }
        }
    }

    fn instance(&self, value: &Value, name: &str, pos: Pos) -> Result<&'a ObjectInstance, EvalError> {
        match value {
            Value::ObjRef { frame, id } => self.twin.instance(*frame, *id).ok_or(EvalError::MissingObject {
                pos,
                frame: *frame as i64,
                id: *id as i64,
            }),
            other => Err(call_error(name, pos, "object", other.type_name())),
        }
    }

    fn frame_index(&self, value: &Value, name: &str, pos: Pos) -> Result<usize, EvalError> {
        match value {
            Value::Int(t) if *t >= 0 && (*t as u64) < self.twin.frames.len() as u64 => Ok(*t as usize),
            Value::Int(t) => Err(EvalError::FrameOutOfRange {
                pos,
                frame: *t,
                frame_count: self.twin.frames.len(),
            }),
            other => Err(call_error(name, pos, "int frame index", other.type_name())),
        }
    }

    fn object_refs(&mut self, frames: impl Iterator<Item = usize>) -> Result<Value, EvalError> {
        let mut out = Vec::new();
        for t in frames {
            let mut ids: Vec<u64> = self.twin.frames[t].instances.iter().map(|o| o.id).collect();
            ids.sort_unstable();
            self.charge(ids.len() as u64)?;
            out.extend(ids.into_iter().map(|id| Value::ObjRef { frame: t, id }));
            if out.len() > self.limits.list_cap {
                return Err(EvalError::ListCapExceeded {
                    cap: self.limits.list_cap,
                });
            }
        }
        Ok(Value::List(out))
    }

    fn builtin(&mut self, name: &str, mut args: Vec<Option<Value>>, pos: Pos) -> Result<Value, EvalError> {
        if name == "objects" {
            return match args.pop().flatten() {
                Some(frame) => {
                    let t = self.frame_index(&frame, name, pos)?;
                    self.object_refs(std::iter::once(t))
                }
                None => self.object_refs(0..self.twin.frames.len()),
            };
        }
        if name == "frames" {
            self.charge(self.twin.frames.len() as u64)?;
            let items = (0..self.twin.frames.len()).map(|t| Value::Int(t as i64)).collect();
            return self.list(items);
        }
        let arity = args.len();
        let args: Vec<Value> = args
            .into_iter()
            .enumerate()
            .map(|(k, a)| {
                a.ok_or_else(|| {
                    call_error(
                        name,
                        pos,
                        format!("{arity} arguments"),
                        format!("missing argument {}", k + 1),
                    )
                })
            })
            .collect::<Result<_, _>>()?;
        let list_arg = |v: &Value| -> Result<Vec<Value>, EvalError> {
            match v {
                Value::List(items) => Ok(items.clone()),
                other => Err(call_error(name, pos, "list", other.type_name())),
            }
        };
        let int_arg = |v: &Value, what: &str| -> Result<i64, EvalError> {
            match v {
                Value::Int(i) => Ok(*i),
                other => Err(call_error(name, pos, format!("int {what}"), other.type_name())),
            }
        };
        let id_value = |id: u64| -> Result<Value, EvalError> {
            i64::try_from(id).map(Value::Int).map_err(|_| EvalError::Arithmetic {
                pos,
                message: "object id exceeds 64-bit signed range".into(),
            })
        };
        match name {
            "count" | "len" => {
                let items = list_arg(&args[0])?;
                Ok(Value::Int(items.len() as i64))
            }
            "obj" => {
                let t = self.frame_index(&args[0], name, pos)?;
                let id = int_arg(&args[1], "id")?;
                let found = u64::try_from(id).ok().and_then(|id| self.twin.instance(t, id));
                match found {
                    Some(o) => Ok(Value::ObjRef { frame: t, id: o.id }),
                    None => Err(EvalError::MissingObject {
                        pos,
                        frame: t as i64,
                        id,
                    }),
                }
            }
            "category" => Ok(Value::Str(self.instance(&args[0], name, pos)?.category.clone())),
            "attributes" => {
                let attrs = &self.instance(&args[0], name, pos)?.attributes;
                Ok(Value::List(attrs.iter().cloned().map(Value::Str).collect()))
            }
            "id" => id_value(self.instance(&args[0], name, pos)?.id),
            "frame" => match &args[0] {
                Value::ObjRef { frame, .. } => Ok(Value::Int(*frame as i64)),
                other => Err(call_error(name, pos, "object", other.type_name())),
            },
            "x" => Ok(Value::Float(self.instance(&args[0], name, pos)?.spatial.x)),
            "y" => Ok(Value::Float(self.instance(&args[0], name, pos)?.spatial.y)),
            "depth" => Ok(Value::Float(self.instance(&args[0], name, pos)?.spatial.depth)),
            "size" => Ok(Value::Float(self.instance(&args[0], name, pos)?.spatial.size)),
            "attr" => {
                let field = match &args[1] {
                    Value::Str(s) => s.clone(),
                    other => return Err(call_error(name, pos, "str field name", other.type_name())),
                };
                match field.as_str() {
                    "category" | "attributes" | "id" | "frame" | "x" | "y" | "depth" | "size" => {
                        self.builtin(&field, vec![Some(args[0].clone())], pos)
                    }
                    _ => Err(EvalError::UnknownIdentifier { pos, name: field }),
                }
            }
            "has_attribute" => {
                let o = self.instance(&args[0], name, pos)?;
                match &args[1] {
                    Value::Str(s) => Ok(Value::Bool(o.attributes.iter().any(|a| a == s))),
                    other => Err(call_error(name, pos, "str", other.type_name())),
                }
            }
            "distance" => {
                let a = self.instance(&args[0], name, pos)?.spatial;
                let b = self.instance(&args[1], name, pos)?.spatial;
                Ok(Value::Float(((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()))
            }
            "frames_present" => {
                let id = int_arg(&args[0], "id")?;
                self.charge(self.twin.frames.len() as u64)?;
                let frames = match u64::try_from(id) {
                    Ok(id) => self.twin.frames_present(id),
                    Err(_) => Vec::new(),
                };
                self.list(frames.into_iter().map(|t| Value::Int(t as i64)).collect())
            }
            "displacement" => {
                let id = int_arg(&args[0], "id")?;
                let t1 = self.frame_index(&args[1], name, pos)?;
                let t2 = self.frame_index(&args[2], name, pos)?;
                let find = |t: usize| {
                    u64::try_from(id)
                        .ok()
                        .and_then(|id| self.twin.instance(t, id))
                        .ok_or(EvalError::MissingObject {
                            pos,
                            frame: t as i64,
                            id,
                        })
                };
                let (a, b) = (find(t1)?.spatial, find(t2)?.spatial);
                Ok(Value::Float(((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()))
            }
            "leftmost" | "rightmost" | "nearest" | "farthest" | "largest" | "smallest" => {
                let items = list_arg(&args[0])?;
                self.charge(items.len() as u64)?;
                let mut keyed = Vec::with_capacity(items.len());
                for item in items {
                    let s = self.instance(&item, name, pos)?.spatial;
                    let key = match name {
                        "leftmost" | "rightmost" => s.x,
                        "nearest" | "farthest" => s.depth,
                        _ => s.size,
                    };
                    keyed.push((Value::Float(key), item));
                }
                extreme_by(keyed, matches!(name, "rightmost" | "farthest" | "largest"), name, pos)
            }
            "sum" => {
                let items = list_arg(&args[0])?;
                self.charge(items.len() as u64)?;
                if items.iter().all(|v| matches!(v, Value::Int(_))) {
                    let mut total: i64 = 0;
                    for v in &items {
                        let Value::Int(i) = v else { unreachable!() };
                        total = total.checked_add(*i).ok_or(EvalError::Arithmetic {
                            pos,
                            message: "integer overflow".into(),
                        })?;
                    }
                    return Ok(Value::Int(total));
                }
                let mut total = 0.0;
                for v in &items {
                    total += v
                        .as_number()
                        .ok_or_else(|| call_error(name, pos, "list of numbers", v.type_name()))?;
                }
                Ok(Value::Float(total))
            }
            "mean" => {
                let items = list_arg(&args[0])?;
                self.charge(items.len() as u64)?;
                if items.is_empty() {
                    return Err(call_error(name, pos, "non-empty list", "empty list"));
                }
                let mut total = 0.0;
                for v in &items {
                    total += v
                        .as_number()
                        .ok_or_else(|| call_error(name, pos, "list of numbers", v.type_name()))?;
                }
                Ok(Value::Float(total / items.len() as f64))
            }
            "min" | "max" => {
                let items = list_arg(&args[0])?;
                self.charge(items.len() as u64)?;
                let keyed = items.into_iter().map(|v| (v.clone(), v)).collect();
                extreme_by(keyed, name == "max", name, pos)
            }
            "unique" => {
                let items = list_arg(&args[0])?;
                self.charge(items.len() as u64)?;
                let mut seen = HashSet::new();
                Ok(Value::List(
                    items.into_iter().filter(|v| seen.insert(v.to_string())).collect(),
                ))
            }
            "abs" => match &args[0] {
                Value::Int(i) => i.checked_abs().map(Value::Int).ok_or(EvalError::Arithmetic {
                    pos,
                    message: "integer overflow".into(),
                }),
                Value::Float(f) => Ok(Value::Float(f.abs())),
                other => Err(call_error(name, pos, "number", other.type_name())),
            },
            _ => Err(EvalError::UnknownIdentifier {
                pos,
                name: name.to_string(),
            }),
        }
    }
}

fn values_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::List(x), Value::List(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| values_equal(p, q)),
        _ => match (a.as_number(), b.as_number()) {
            (Some(x), Some(y)) => match (a, b) {
                (Value::Int(i), Value::Int(j)) => i == j,
                _ => x == y,
            },
            _ => a == b,
        },
    }
}

/// Orders two keys: numbers numerically, strings lexicographically.
fn compare_keys(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => Some(x.cmp(y)),
        (Value::Str(x), Value::Str(y)) => Some(x.cmp(y)),
        _ => a.as_number()?.partial_cmp(&b.as_number()?),
    }
}

/// Argmin/argmax over (key, item) pairs. Exact key ties go to the object with
/// the smaller (id, frame); non-object ties keep the earliest item.
fn extreme_by(keyed: Vec<(Value, Value)>, want_max: bool, name: &str, pos: Pos) -> Result<Value, EvalError> {
    let mut best: Option<(Value, Value)> = None;
    for (key, item) in keyed {
        let replace = match &best {
            None => true,
            Some((best_key, best_item)) => {
                let ord = compare_keys(&key, best_key).ok_or_else(|| {
                    call_error(
                        name,
                        pos,
                        "comparable keys",
                        format!("{} and {}", key.type_name(), best_key.type_name()),
                    )
                })?;
                let better = if want_max {
                    ord == Ordering::Greater
                } else {
                    ord == Ordering::Less
                };
                better
                    || (ord == Ordering::Equal
                        && matches!((tie_rank(&item), tie_rank(best_item)), (Some(a), Some(b)) if a < b))
            }
        };
        if replace {
            best = Some((key, item));
        }
    }
    best.map(|(_, item)| item)
        .ok_or_else(|| call_error(name, pos, "non-empty list", "empty list"))
}
