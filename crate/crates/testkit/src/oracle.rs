//! Reference evaluator for generated single-sheet workbooks.
//!
//! Formulas are kept in a small structured form and evaluated directly, never
//! through the engine's parser or scheduler. Cycle membership comes from a
//! walk-length argument: a cell reaches a cycle iff a reference walk longer
//! than the number of formula cells starts at it. All other cells are found
//! by re-evaluating the whole grid until nothing changes.

use std::collections::BTreeMap;

use pws_core::address::{column_letters, CellAddress, Coord};
use pws_core::value::{ErrorKind, Value};
use pws_core::workbook::Workbook;
use rand::Rng;

pub const SHEET: &str = "Sheet1";

#[derive(Debug, Clone, PartialEq)]
pub enum GenFormula {
    Ref(Coord),
    AddConst(Coord, i32),
    MulConst(Coord, i32),
    Add(Coord, Coord),
    Sub(Coord, Coord),
    Div(Coord, Coord),
    Sum(Coord, Coord),
    Max(Coord, Coord),
    IfPositive(Coord, Coord, Coord),
}

#[derive(Debug, Clone, PartialEq)]
pub enum GenCell {
    Number(i32),
    Text(String),
    Formula(GenFormula),
}

fn a1(c: Coord) -> String {
    format!("{}{}", column_letters(c.col), c.row)
}

/// Range corners normalised to top-left and bottom-right.
fn corners(p: Coord, q: Coord) -> (Coord, Coord) {
    (
        Coord {
            row: p.row.min(q.row),
            col: p.col.min(q.col),
        },
        Coord {
            row: p.row.max(q.row),
            col: p.col.max(q.col),
        },
    )
}

impl GenFormula {
    pub fn source(&self) -> String {
        match self {
            GenFormula::Ref(c) => format!("={}", a1(*c)),
            GenFormula::AddConst(c, k) => format!("={}+{k}", a1(*c)),
            GenFormula::MulConst(c, k) => format!("={}*{k}", a1(*c)),
            GenFormula::Add(p, q) => format!("={}+{}", a1(*p), a1(*q)),
            GenFormula::Sub(p, q) => format!("={}-{}", a1(*p), a1(*q)),
            GenFormula::Div(p, q) => format!("={}/{}", a1(*p), a1(*q)),
            GenFormula::Sum(p, q) => format!("=SUM({}:{})", a1(*p), a1(*q)),
            GenFormula::Max(p, q) => format!("=MAX({}:{})", a1(*p), a1(*q)),
            GenFormula::IfPositive(c, t, e) => format!("=IF({}>0,{},{})", a1(*c), a1(*t), a1(*e)),
        }
    }

    /// Cells the formula reads, ranges expanded.
    fn reads(&self) -> Vec<Coord> {
        match self {
            GenFormula::Ref(c) | GenFormula::AddConst(c, _) | GenFormula::MulConst(c, _) => vec![*c],
            GenFormula::Add(p, q) | GenFormula::Sub(p, q) | GenFormula::Div(p, q) => vec![*p, *q],
            GenFormula::Sum(p, q) | GenFormula::Max(p, q) => {
                let (tl, br) = corners(*p, *q);
                (tl.row..=br.row)
                    .flat_map(|row| (tl.col..=br.col).map(move |col| Coord { row, col }))
                    .collect()
            }
            GenFormula::IfPositive(c, t, e) => vec![*c, *t, *e],
        }
    }
}

/// A generated workbook on a `size × size` corner of `Sheet1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenBook {
    pub size: u32,
    pub cells: BTreeMap<Coord, GenCell>,
}

const WORDS: [&str; 4] = ["apple", "Pear", "x y", "-"];

impl GenBook {
    /// Roughly `density` of the cells filled, about half of them formulas.
    pub fn random(rng: &mut impl Rng, size: u32, density: f64) -> Self {
        let pick = |rng: &mut dyn rand::RngCore| Coord {
            row: rng.random_range(1..=size),
            col: rng.random_range(1..=size),
        };
        let mut cells = BTreeMap::new();
        for row in 1..=size {
            for col in 1..=size {
                if !rng.random_bool(density) {
                    continue;
                }
                let cell = match rng.random_range(0..20) {
                    0..=7 => GenCell::Number(rng.random_range(-9..=9)),
                    8 => GenCell::Text(WORDS[rng.random_range(0..WORDS.len())].to_string()),
                    _ => {
                        let (p, q, r) = (pick(rng), pick(rng), pick(rng));
                        let k = rng.random_range(-5..=5);
                        GenCell::Formula(match rng.random_range(0..9) {
                            0 => GenFormula::Ref(p),
                            1 => GenFormula::AddConst(p, k),
                            2 => GenFormula::MulConst(p, k),
                            3 => GenFormula::Add(p, q),
                            4 => GenFormula::Sub(p, q),
                            5 => GenFormula::Div(p, q),
                            6 => GenFormula::Sum(p, q),
                            7 => GenFormula::Max(p, q),
                            _ => GenFormula::IfPositive(p, q, r),
                        })
                    }
                };
                cells.insert(Coord { row, col }, cell);
            }
        }
        Self { size, cells }
    }

    pub fn input(cell: &GenCell) -> String {
        match cell {
            GenCell::Number(n) => n.to_string(),
            GenCell::Text(t) => t.clone(),
            GenCell::Formula(f) => f.source(),
        }
    }

    pub fn to_workbook(&self) -> Workbook {
        let mut wb = Workbook::new();
        for (c, cell) in &self.cells {
            wb.set_cell(&CellAddress::from_coord(SHEET, *c), &Self::input(cell))
                .expect("generated input is valid");
        }
        wb
    }

    fn formula(&self, c: Coord) -> Option<&GenFormula> {
        match self.cells.get(&c) {
            Some(GenCell::Formula(f)) => Some(f),
            _ => None,
        }
    }

    /// Formula cells from which a reference walk reaches a cycle.
    pub fn cycle_tainted(&self) -> BTreeMap<Coord, bool> {
        let formulas: Vec<Coord> = self.formula_cells();
        let mut alive: BTreeMap<Coord, bool> = formulas.iter().map(|c| (*c, true)).collect();
        // alive[c] after k rounds: some walk of length k starts at c.
        for _ in 0..=formulas.len() {
            let next = formulas
                .iter()
                .map(|c| {
                    let f = self.formula(*c).expect("formula");
                    (*c, f.reads().iter().any(|d| alive.get(d).copied().unwrap_or(false)))
                })
                .collect();
            alive = next;
        }
        alive
    }

    fn formula_cells(&self) -> Vec<Coord> {
        self.cells
            .iter()
            .filter(|(_, c)| matches!(c, GenCell::Formula(_)))
            .map(|(k, _)| *k)
            .collect()
    }

    /// Expected value of every non-empty cell.
    pub fn oracle(&self) -> BTreeMap<Coord, Value> {
        let tainted = self.cycle_tainted();
        let formulas = self.formula_cells();
        let mut state: BTreeMap<Coord, Option<Value>> = formulas
            .iter()
            .map(|c| {
                let v = tainted[c].then_some(Value::Error(ErrorKind::Cycle));
                (*c, v)
            })
            .collect();

        for _ in 0..=formulas.len() {
            let mut next = state.clone();
            for c in &formulas {
                if !tainted[c] {
                    next.insert(*c, self.eval(self.formula(*c).expect("formula"), &state));
                }
            }
            if next == state {
                break;
            }
            state = next;
        }

        let mut out = BTreeMap::new();
        for (c, cell) in &self.cells {
            let v = match cell {
                GenCell::Number(n) => Value::Number(f64::from(*n)),
                GenCell::Text(t) => Value::Text(t.clone()),
                GenCell::Formula(_) => state[c].clone().expect("every acyclic cell resolves"),
            };
            out.insert(*c, v);
        }
        out
    }

    /// `None` until every formula input is known.
    fn read(&self, c: Coord, state: &BTreeMap<Coord, Option<Value>>) -> Option<Option<Value>> {
        match self.cells.get(&c) {
            None => Some(None),
            Some(GenCell::Number(n)) => Some(Some(Value::Number(f64::from(*n)))),
            Some(GenCell::Text(t)) => Some(Some(Value::Text(t.clone()))),
            Some(GenCell::Formula(_)) => state[&c].clone().map(Some),
        }
    }

    fn eval(&self, f: &GenFormula, state: &BTreeMap<Coord, Option<Value>>) -> Option<Value> {
        for c in f.reads() {
            self.read(c, state)?;
        }
        let get = |c: Coord| self.read(c, state).expect("known");
        let num = |c: Coord| -> Result<f64, ErrorKind> {
            match get(c) {
                None => Ok(0.0),
                Some(Value::Number(n)) => Ok(n),
                Some(Value::Error(e)) => Err(e),
                Some(_) => Err(ErrorKind::Value),
            }
        };
        let finite = |x: f64| {
            if x.is_finite() {
                Value::Number(x)
            } else {
                Value::Error(ErrorKind::Value)
            }
        };
        let arith = |p: Coord, q: Coord, op: fn(f64, f64) -> Result<f64, ErrorKind>| match (num(p), num(q)) {
            (Err(e), _) | (_, Err(e)) => Value::Error(e),
            (Ok(x), Ok(y)) => match op(x, y) {
                Ok(z) => finite(z),
                Err(e) => Value::Error(e),
            },
        };
        Some(match f {
            GenFormula::Ref(c) => get(*c).unwrap_or(Value::Number(0.0)),
            GenFormula::AddConst(c, k) => match num(*c) {
                Ok(x) => finite(x + f64::from(*k)),
                Err(e) => Value::Error(e),
            },
            GenFormula::MulConst(c, k) => match num(*c) {
                Ok(x) => finite(x * f64::from(*k)),
                Err(e) => Value::Error(e),
            },
            GenFormula::Add(p, q) => arith(*p, *q, |x, y| Ok(x + y)),
            GenFormula::Sub(p, q) => arith(*p, *q, |x, y| Ok(x - y)),
            GenFormula::Div(p, q) => arith(*p, *q, |x, y| if y == 0.0 { Err(ErrorKind::Div0) } else { Ok(x / y) }),
            GenFormula::Sum(_, _) | GenFormula::Max(_, _) => {
                let mut numbers = Vec::new();
                for c in f.reads() {
                    match get(c) {
                        Some(Value::Number(n)) => numbers.push(n),
                        Some(Value::Error(e)) => return Some(Value::Error(e)),
                        _ => {}
                    }
                }
                if matches!(f, GenFormula::Sum(..)) {
                    finite(numbers.iter().sum())
                } else {
                    Value::Number(numbers.into_iter().reduce(f64::max).unwrap_or(0.0))
                }
            }
            GenFormula::IfPositive(c, t, e) => {
                let positive = match get(*c) {
                    None => false,
                    Some(Value::Number(n)) => n > 0.0,
                    // Text sorts after every number.
                    Some(Value::Text(_)) | Some(Value::Boolean(_)) => true,
                    Some(Value::Error(err)) => return Some(Value::Error(err)),
                };
                get(if positive { *t } else { *e }).unwrap_or(Value::Number(0.0))
            }
        })
    }
}
