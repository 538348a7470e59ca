use std::cmp::Ordering;

use super::{BinaryOp, Expr, ExternalRef, Function};
use crate::address::Coord;
use crate::value::{format_number, ErrorKind, Value};

/// An operand during evaluation: a value, or a reference to an empty cell.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Scalar {
    Empty,
    Value(Value),
}

/// Supplies cell contents to the evaluator.
pub(crate) trait Resolver {
    /// `Err` when the sheet cannot be resolved.
    fn cell(&self, sheet: Option<&str>, coord: Coord) -> Result<Scalar, ErrorKind>;
    /// Non-empty values inside the rectangle, row-major.
    fn range(&self, sheet: Option<&str>, a: Coord, b: Coord) -> Result<Vec<Value>, ErrorKind>;
    /// `None` when the external book is not registered.
    fn external(&self, r: &ExternalRef) -> Option<Scalar>;
}

pub(crate) fn evaluate(expr: &Expr, resolver: &dyn Resolver) -> Value {
    match eval(expr, resolver) {
        Scalar::Empty => Value::Number(0.0),
        Scalar::Value(v) => v,
    }
}

fn err(kind: ErrorKind) -> Scalar {
    Scalar::Value(Value::Error(kind))
}

fn eval(expr: &Expr, r: &dyn Resolver) -> Scalar {
    match expr {
        Expr::Number(n) => Scalar::Value(Value::Number(*n)),
        Expr::Text(t) => Scalar::Value(Value::Text(t.clone())),
        Expr::Ref(c) => r.cell(c.sheet.as_deref(), c.coord).unwrap_or_else(err),
        // A bare range outside an aggregate is not a scalar.
        Expr::Range(_) => err(ErrorKind::Value),
        Expr::External(x) => r.external(x).unwrap_or(err(ErrorKind::Ref)),
        Expr::Neg(inner) => match to_number(&eval(inner, r)) {
            Ok(n) => Scalar::Value(Value::number(-n)),
            Err(e) => err(e),
        },
        Expr::Binary(op, lhs, rhs) => {
            let a = eval(lhs, r);
            let b = eval(rhs, r);
            Scalar::Value(binary(*op, &a, &b))
        }
        Expr::Call(func, args) => call(*func, args, r),
    }
}

fn to_number(s: &Scalar) -> Result<f64, ErrorKind> {
    match s {
        Scalar::Empty => Ok(0.0),
        Scalar::Value(Value::Number(n)) => Ok(*n),
        Scalar::Value(Value::Boolean(b)) => Ok(if *b { 1.0 } else { 0.0 }),
        Scalar::Value(Value::Text(t)) => parse_numeric_text(t).ok_or(ErrorKind::Value),
        Scalar::Value(Value::Error(e)) => Err(*e),
    }
}

/// Plain decimal text such as `12`, `-3.5`, `1e3`; never `inf` or `NaN`.
pub(crate) fn parse_numeric_text(text: &str) -> Option<f64> {
    let t = text.trim();
    let plausible = !t.is_empty()
        && t.chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '+' | '-'))
        && t.chars().any(|c| c.is_ascii_digit());
    if !plausible {
        return None;
    }
    t.parse::<f64>().ok().filter(|n| n.is_finite())
}

fn to_text(s: &Scalar) -> Result<String, ErrorKind> {
    match s {
        Scalar::Empty => Ok(String::new()),
        Scalar::Value(Value::Error(e)) => Err(*e),
        Scalar::Value(Value::Number(n)) => Ok(format_number(*n)),
        Scalar::Value(v) => Ok(v.to_string()),
    }
}

fn binary(op: BinaryOp, a: &Scalar, b: &Scalar) -> Value {
    use BinaryOp::*;
    match op {
        Add | Sub | Mul | Div | Pow => {
            let (x, y) = match (to_number(a), to_number(b)) {
                (Ok(x), Ok(y)) => (x, y),
                (Err(e), _) | (_, Err(e)) => return Value::Error(e),
            };
            match op {
                Add => Value::number(x + y),
                Sub => Value::number(x - y),
                Mul => Value::number(x * y),
                Div if y == 0.0 => Value::Error(ErrorKind::Div0),
                Div => Value::number(x / y),
                Pow if x == 0.0 && y < 0.0 => Value::Error(ErrorKind::Div0),
                _ => Value::number(x.powf(y)),
            }
        }
        Concat => match (to_text(a), to_text(b)) {
            (Ok(x), Ok(y)) => Value::Text(x + &y),
            (Err(e), _) | (_, Err(e)) => Value::Error(e),
        },
        Eq | Ne | Lt | Le | Gt | Ge => match compare(a, b) {
            Err(e) => Value::Error(e),
            Ok(ord) => Value::Boolean(match op {
                Eq => ord == Ordering::Equal,
                Ne => ord != Ordering::Equal,
                Lt => ord == Ordering::Less,
                Le => ord != Ordering::Greater,
                Gt => ord == Ordering::Greater,
                _ => ord != Ordering::Less,
            }),
        },
    }
}

/// Numbers sort before text, text before booleans; text is compared by code point.
fn compare(a: &Scalar, b: &Scalar) -> Result<Ordering, ErrorKind> {
    fn rank(v: &Value) -> u8 {
        match v {
            Value::Number(_) => 0,
            Value::Text(_) => 1,
            _ => 2,
        }
    }
    let blank_like = |other: &Scalar| match other {
        Scalar::Value(Value::Text(_)) => Value::Text(String::new()),
        Scalar::Value(Value::Boolean(_)) => Value::Boolean(false),
        _ => Value::Number(0.0),
    };
    let x = match a {
        Scalar::Empty => blank_like(b),
        Scalar::Value(v) => v.clone(),
    };
    let y = match b {
        Scalar::Empty => blank_like(a),
        Scalar::Value(v) => v.clone(),
    };
    match (&x, &y) {
        (Value::Error(e), _) | (_, Value::Error(e)) => Err(*e),
        (Value::Number(p), Value::Number(q)) => Ok(p.partial_cmp(q).unwrap_or(Ordering::Equal)),
        (Value::Text(p), Value::Text(q)) => Ok(p.cmp(q)),
        (Value::Boolean(p), Value::Boolean(q)) => Ok(p.cmp(q)),
        _ => Ok(rank(&x).cmp(&rank(&y))),
    }
}

fn call(func: Function, args: &[Expr], r: &dyn Resolver) -> Scalar {
    if func == Function::If {
        let cond = match eval(&args[0], r) {
            Scalar::Empty => false,
            Scalar::Value(Value::Boolean(b)) => b,
            Scalar::Value(Value::Number(n)) => n != 0.0,
            Scalar::Value(Value::Text(_)) => return err(ErrorKind::Value),
            Scalar::Value(Value::Error(e)) => return err(e),
        };
        return eval(if cond { &args[1] } else { &args[2] }, r);
    }

    // References contribute only their numeric cells; direct scalars are coerced.
    let mut numbers = Vec::new();
    let counting = func == Function::Count;
    for arg in args {
        let referenced = match arg {
            Expr::Range(range) => r.range(range.sheet.as_deref(), range.start, range.end),
            Expr::Ref(c) => match r.cell(c.sheet.as_deref(), c.coord) {
                Ok(Scalar::Value(v)) => Ok(vec![v]),
                Ok(Scalar::Empty) => Ok(Vec::new()),
                Err(e) => Err(e),
            },
            other => {
                let s = eval(other, r);
                if counting {
                    if let Scalar::Value(Value::Number(n)) = s {
                        numbers.push(n);
                    }
                    continue;
                }
                match to_number(&s) {
                    Ok(n) => numbers.push(n),
                    Err(e) => return err(e),
                }
                continue;
            }
        };
        match referenced {
            Ok(values) => {
                for v in values {
                    match v {
                        Value::Number(n) => numbers.push(n),
                        Value::Error(e) if !counting => return err(e),
                        _ => {}
                    }
                }
            }
            Err(_) if counting => {}
            Err(e) => return err(e),
        }
    }

    let value = match func {
        Function::Sum => Value::number(numbers.iter().sum()),
        Function::Count => Value::Number(numbers.len() as f64),
        Function::Average if numbers.is_empty() => Value::Error(ErrorKind::Div0),
        Function::Average => Value::number(numbers.iter().sum::<f64>() / numbers.len() as f64),
        Function::Min => Value::Number(numbers.iter().copied().reduce(f64::min).unwrap_or(0.0)),
        Function::Max => Value::Number(numbers.iter().copied().reduce(f64::max).unwrap_or(0.0)),
        Function::If => unreachable!(),
    };
    Scalar::Value(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_formula;
    use std::collections::HashMap;

    struct Grid(HashMap<Coord, Value>);

    impl Resolver for Grid {
        fn cell(&self, sheet: Option<&str>, coord: Coord) -> Result<Scalar, ErrorKind> {
            if sheet.is_some_and(|s| s != "S") {
                return Err(ErrorKind::Name);
            }
            Ok(self
                .0
                .get(&coord)
                .cloned()
                .map_or(Scalar::Empty, Scalar::Value))
        }

        fn range(&self, sheet: Option<&str>, a: Coord, b: Coord) -> Result<Vec<Value>, ErrorKind> {
            if sheet.is_some_and(|s| s != "S") {
                return Err(ErrorKind::Name);
            }
            let mut keys: Vec<_> = self
                .0
                .keys()
                .filter(|c| {
                    (a.row.min(b.row)..=a.row.max(b.row)).contains(&c.row)
                        && (a.col.min(b.col)..=a.col.max(b.col)).contains(&c.col)
                })
                .copied()
                .collect();
            keys.sort();
            Ok(keys.iter().map(|k| self.0[k].clone()).collect())
        }

        fn external(&self, _: &ExternalRef) -> Option<Scalar> {
            None
        }
    }

    fn grid(cells: &[(&str, Value)]) -> Grid {
        Grid(
            cells
                .iter()
                .map(|(a, v)| (Coord::parse(a).unwrap(), v.clone()))
                .collect(),
        )
    }

    fn run(g: &Grid, src: &str) -> Value {
        evaluate(&parse_formula(src).unwrap(), g)
    }

    #[test]
    fn arithmetic_and_empty_cells() {
        let g = grid(&[("A1", Value::Number(2.0)), ("A2", Value::Number(3.0))]);
        assert_eq!(run(&g, "=A1+A2"), Value::Number(5.0));
        assert_eq!(run(&g, "=Z9"), Value::Number(0.0));
        assert_eq!(run(&g, "=Z9+1"), Value::Number(1.0));
        assert_eq!(run(&g, "=\"x\"&Z9&\"y\""), Value::Text("xy".into()));
        assert_eq!(run(&g, "=A1/0"), Value::Error(ErrorKind::Div0));
        assert_eq!(run(&g, "=0^-1"), Value::Error(ErrorKind::Div0));
        assert_eq!(run(&g, "=(-8)^0.5"), Value::Error(ErrorKind::Value));
        assert_eq!(run(&g, "=-2^2"), Value::Number(4.0));
        assert_eq!(run(&g, "=A1&A2"), Value::Text("23".into()));
    }

    #[test]
    fn text_coercion_and_comparison() {
        let g = grid(&[("A1", Value::Text("abc".into())), ("A2", Value::Text("4".into()))]);
        assert_eq!(run(&g, "=A1+1"), Value::Error(ErrorKind::Value));
        assert_eq!(run(&g, "=A2+1"), Value::Number(5.0));
        assert_eq!(run(&g, "=A1=\"ABC\""), Value::Boolean(false));
        assert_eq!(run(&g, "=\"B\"<\"a\""), Value::Boolean(true));
        assert_eq!(run(&g, "=1<\"a\""), Value::Boolean(true));
        assert_eq!(run(&g, "=Z1=0"), Value::Boolean(true));
        assert_eq!(run(&g, "=Z1=\"\""), Value::Boolean(true));
    }

    #[test]
    fn functions() {
        let g = grid(&[
            ("B1", Value::Number(1.0)),
            ("B2", Value::Text("skip".into())),
            ("B3", Value::Number(5.0)),
        ]);
        assert_eq!(run(&g, "=SUM(B1:B3)"), Value::Number(6.0));
        assert_eq!(run(&g, "=AVERAGE(B1:B3)"), Value::Number(3.0));
        assert_eq!(run(&g, "=MIN(B1:B3,0.5)"), Value::Number(0.5));
        assert_eq!(run(&g, "=MAX(B3:B1)"), Value::Number(5.0));
        assert_eq!(run(&g, "=COUNT(B1:B3,\"x\",1)"), Value::Number(3.0));
        assert_eq!(run(&g, "=AVERAGE(C1:C9)"), Value::Error(ErrorKind::Div0));
        assert_eq!(run(&g, "=MAX(C1:C9)"), Value::Number(0.0));
        assert_eq!(run(&g, "=SUM(B2)"), Value::Number(0.0));
        assert_eq!(run(&g, "=SUM(\"x\")"), Value::Error(ErrorKind::Value));
        assert_eq!(run(&g, "=SUM(Other!A1:A2)"), Value::Error(ErrorKind::Name));
        assert_eq!(run(&g, "=B1:B3"), Value::Error(ErrorKind::Value));
    }

    #[test]
    fn if_is_lazy_and_errors_propagate() {
        let g = grid(&[("A1", Value::Error(ErrorKind::Div0))]);
        assert_eq!(run(&g, "=IF(1>0,7,A1)"), Value::Number(7.0));
        assert_eq!(run(&g, "=IF(A1,1,2)"), Value::Error(ErrorKind::Div0));
        assert_eq!(run(&g, "=IF(\"t\",1,2)"), Value::Error(ErrorKind::Value));
        assert_eq!(run(&g, "=IF(Z1,1,2)"), Value::Number(2.0));
        assert_eq!(run(&g, "=SUM(A1,1)"), Value::Error(ErrorKind::Div0));
        assert_eq!(run(&g, "=COUNT(A1,1)"), Value::Number(1.0));
        assert_eq!(run(&g, "=[b.pws]S!A1"), Value::Error(ErrorKind::Ref));
    }
}
