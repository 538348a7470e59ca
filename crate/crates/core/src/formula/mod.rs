//! Formula language: AST, parser and scalar evaluator.
//!
//! The grammar is deliberately closed: numbers, strings, cell and range
//! references (optionally sheet-qualified), external references of the form
//! `[book]Sheet!A1`, the operators `+ - * / ^ &` and comparisons, and the
//! functions `SUM AVERAGE MIN MAX IF COUNT`. Everything else is a syntax error.

mod eval;
mod parser;

use std::fmt;

use thiserror::Error;

use crate::address::{format_sheet_name, Coord};

pub(crate) use eval::{evaluate, parse_numeric_text, Resolver, Scalar};
pub use parser::parse_formula;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("{function} expects {expected} argument(s), found {found}")]
    Arity {
        function: Function,
        expected: &'static str,
        found: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Function {
    Sum,
    Average,
    Min,
    Max,
    If,
    Count,
}

impl Function {
    pub fn from_name(name: &str) -> Option<Function> {
        Some(match name.to_ascii_uppercase().as_str() {
            "SUM" => Function::Sum,
            "AVERAGE" => Function::Average,
            "MIN" => Function::Min,
            "MAX" => Function::Max,
            "IF" => Function::If,
            "COUNT" => Function::Count,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Function::Sum => "SUM",
            Function::Average => "AVERAGE",
            Function::Min => "MIN",
            Function::Max => "MAX",
            Function::If => "IF",
            Function::Count => "COUNT",
        }
    }

    pub(crate) fn check_arity(self, found: usize) -> Result<(), FormulaError> {
        let (ok, expected) = match self {
            Function::If => (found == 3, "3"),
            _ => (found >= 1, "at least 1"),
        };
        if ok {
            Ok(())
        } else {
            Err(FormulaError::Arity {
                function: self,
                expected,
                found,
            })
        }
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Concat,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
            BinaryOp::Concat => "&",
            BinaryOp::Eq => "=",
            BinaryOp::Ne => "<>",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
        }
    }
}

/// Reference to a single cell; `sheet == None` means the formula's own sheet.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellRef {
    pub sheet: Option<String>,
    pub coord: Coord,
}

/// Rectangular range, corners kept as written.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RangeRef {
    pub sheet: Option<String>,
    pub start: Coord,
    pub end: Coord,
}

/// Reference into another workbook.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExternalRef {
    pub book: String,
    pub sheet: String,
    pub coord: Coord,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Text(String),
    Ref(CellRef),
    Range(RangeRef),
    External(ExternalRef),
    Neg(Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Call(Function, Vec<Expr>),
}

impl Expr {
    /// True exactly for external-reference nodes.
    pub fn is_external(&self) -> bool {
        matches!(self, Expr::External(_))
    }

    /// Pre-order walk over every node.
    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a Expr)) {
        visit(self);
        match self {
            Expr::Neg(inner) => inner.walk(visit),
            Expr::Binary(_, l, r) => {
                l.walk(visit);
                r.walk(visit);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.walk(visit)),
            _ => {}
        }
    }

    pub fn contains_external(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| found |= e.is_external());
        found
    }

    /// Formula source text for this expression, with the leading `=`.
    pub fn unparse(&self) -> String {
        format!("={self}")
    }

    fn fmt_operand(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if matches!(self, Expr::Binary(..)) {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

fn fmt_sheet_prefix(sheet: &Option<String>, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match sheet {
        Some(s) => write!(f, "{}!", format_sheet_name(s)),
        None => Ok(()),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(n) => write!(f, "{n}"),
            Expr::Text(t) => write!(f, "\"{}\"", t.replace('"', "\"\"")),
            Expr::Ref(r) => {
                fmt_sheet_prefix(&r.sheet, f)?;
                write!(f, "{}", r.coord)
            }
            Expr::Range(r) => {
                fmt_sheet_prefix(&r.sheet, f)?;
                write!(f, "{}:{}", r.start, r.end)
            }
            Expr::External(x) => {
                write!(f, "[{}]{}!{}", x.book, format_sheet_name(&x.sheet), x.coord)
            }
            Expr::Neg(inner) => {
                f.write_str("-")?;
                inner.fmt_operand(f)
            }
            Expr::Binary(op, l, r) => {
                l.fmt_operand(f)?;
                f.write_str(op.symbol())?;
                r.fmt_operand(f)
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}
