//! Dependency graph and full recalculation.
//!
//! Formula cells are ordered with Kahn's algorithm over their static
//! references. Whatever Kahn cannot schedule lies on a cycle or downstream of
//! one, and evaluates to `#CYCLE`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use crate::address::{CellAddress, Coord};
use crate::formula::{evaluate, Expr, ExternalRef, Resolver, Scalar};
use crate::value::{ErrorKind, Value};
use crate::workbook::{CellContent, Literal, Workbook, WorkbookError};

type Key = (usize, Coord);

/// Values of registered external workbooks, by book name.
#[derive(Debug, Clone, Default)]
pub struct ExternalBooks {
    books: HashMap<String, HashMap<(String, Coord), Value>>,
}

impl ExternalBooks {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers (or replaces) a book; cells not listed read as empty.
    pub fn register(&mut self, book: impl Into<String>, values: impl IntoIterator<Item = (CellAddress, Value)>) {
        let cells = values
            .into_iter()
            .map(|(a, v)| ((a.sheet.clone(), a.coord()), v))
            .collect();
        self.books.insert(book.into(), cells);
    }

    fn lookup(&self, r: &ExternalRef) -> Option<Scalar> {
        let book = self.books.get(&r.book)?;
        Some(
            book.get(&(r.sheet.clone(), r.coord))
                .cloned()
                .map_or(Scalar::Empty, Scalar::Value),
        )
    }
}

/// Evaluated value of every non-empty cell.
#[derive(Debug, Clone, Default)]
pub struct Values {
    sheet_names: Vec<String>,
    map: HashMap<Key, Value>,
}

impl Values {
    pub fn get(&self, addr: &CellAddress) -> Option<&Value> {
        let idx = self.sheet_names.iter().position(|s| *s == addr.sheet)?;
        self.map.get(&(idx, addr.coord()))
    }

    /// Displayed text; empty cells display as the empty string.
    pub fn display(&self, addr: &CellAddress) -> String {
        self.get(addr).map(Value::to_string).unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn to_map(&self) -> BTreeMap<CellAddress, Value> {
        self.map
            .iter()
            .map(|((s, c), v)| (CellAddress::from_coord(self.sheet_names[*s].clone(), *c), v.clone()))
            .collect()
    }
}

/// A referenced region: a single cell is a one-cell rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Target {
    pub sheet: usize,
    pub top_left: Coord,
    pub bottom_right: Coord,
}

impl Target {
    fn cell(sheet: usize, c: Coord) -> Self {
        Self {
            sheet,
            top_left: c,
            bottom_right: c,
        }
    }

    pub fn covers(&self, sheet: usize, c: Coord) -> bool {
        self.sheet == sheet
            && (self.top_left.row..=self.bottom_right.row).contains(&c.row)
            && (self.top_left.col..=self.bottom_right.col).contains(&c.col)
    }
}

/// Every formula cell with the regions it references. Unresolvable sheet
/// names and external references contribute nothing.
pub(crate) fn formula_targets(wb: &Workbook) -> Vec<(Key, &Expr, Vec<Target>)> {
    let mut out = Vec::new();
    for (si, sheet) in wb.sheets().iter().enumerate() {
        for (coord, cell) in sheet.cells() {
            let CellContent::Formula(f) = &cell.content else {
                continue;
            };
            let resolve = |name: &Option<String>| match name {
                None => Some(si),
                Some(n) => wb.sheet_index(n),
            };
            let mut targets = Vec::new();
            f.expr().walk(&mut |e| match e {
                Expr::Ref(r) => {
                    if let Some(s) = resolve(&r.sheet) {
                        targets.push(Target::cell(s, r.coord));
                    }
                }
                Expr::Range(r) => {
                    if let Some(s) = resolve(&r.sheet) {
                        targets.push(Target {
                            sheet: s,
                            top_left: Coord {
                                row: r.start.row.min(r.end.row),
                                col: r.start.col.min(r.end.col),
                            },
                            bottom_right: Coord {
                                row: r.start.row.max(r.end.row),
                                col: r.start.col.max(r.end.col),
                            },
                        });
                    }
                }
                _ => {}
            });
            out.push(((si, coord), f.expr(), targets));
        }
    }
    out
}

struct Context<'a> {
    wb: &'a Workbook,
    sheet: usize,
    values: &'a HashMap<Key, Value>,
    externals: &'a ExternalBooks,
}

impl Context<'_> {
    fn sheet_index(&self, name: Option<&str>) -> Result<usize, ErrorKind> {
        match name {
            None => Ok(self.sheet),
            Some(n) => self.wb.sheet_index(n).ok_or(ErrorKind::Name),
        }
    }

    fn value_of(&self, sheet: usize, coord: Coord, content: &CellContent) -> Option<Value> {
        match content {
            CellContent::Empty => None,
            CellContent::Literal(Literal::Number(n)) => Some(Value::Number(*n)),
            CellContent::Literal(Literal::Text(t)) => Some(Value::Text(t.clone())),
            CellContent::Formula(_) => Some(
                self.values
                    .get(&(sheet, coord))
                    .cloned()
                    .unwrap_or(Value::Error(ErrorKind::Cycle)),
            ),
        }
    }
}

impl Resolver for Context<'_> {
    fn cell(&self, sheet: Option<&str>, coord: Coord) -> Result<Scalar, ErrorKind> {
        let si = self.sheet_index(sheet)?;
        let content = self.wb.sheets()[si].content_at(coord);
        Ok(self
            .value_of(si, coord, content)
            .map_or(Scalar::Empty, Scalar::Value))
    }

    fn range(&self, sheet: Option<&str>, a: Coord, b: Coord) -> Result<Vec<Value>, ErrorKind> {
        let si = self.sheet_index(sheet)?;
        let s = &self.wb.sheets()[si];
        let (c0, c1) = (a.col.min(b.col), a.col.max(b.col));
        let mut out = Vec::new();
        for row in a.row.min(b.row)..=a.row.max(b.row) {
            for (coord, cell) in s.row_span(row, c0, c1) {
                out.extend(self.value_of(si, coord, &cell.content));
            }
        }
        Ok(out)
    }

    fn external(&self, r: &ExternalRef) -> Option<Scalar> {
        self.externals.lookup(r)
    }
}

pub fn recalculate(wb: &Workbook) -> Values {
    recalculate_with(wb, &ExternalBooks::default())
}

/// Evaluates every formula in dependency order. Never fails: problems show up
/// as error values.
pub fn recalculate_with(wb: &Workbook, externals: &ExternalBooks) -> Values {
    let nodes = formula_targets(wb);
    let index: HashMap<Key, usize> = nodes.iter().enumerate().map(|(i, n)| (n.0, i)).collect();

    let mut formulas_by_sheet: Vec<Vec<(Coord, usize)>> = vec![Vec::new(); wb.sheets().len()];
    for (i, ((s, c), _, _)) in nodes.iter().enumerate() {
        formulas_by_sheet[*s].push((*c, i));
    }

    let mut successors: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    let mut indegree = vec![0usize; nodes.len()];
    for (i, (_, _, targets)) in nodes.iter().enumerate() {
        let mut preds = Vec::new();
        for t in targets {
            if t.top_left == t.bottom_right {
                preds.extend(index.get(&(t.sheet, t.top_left)).copied());
            } else {
                preds.extend(
                    formulas_by_sheet[t.sheet]
                        .iter()
                        .filter(|(c, _)| t.covers(t.sheet, *c))
                        .map(|(_, j)| *j),
                );
            }
        }
        preds.sort_unstable();
        preds.dedup();
        indegree[i] = preds.len();
        for p in preds {
            successors[p].push(i);
        }
    }

    let mut values: HashMap<Key, Value> = HashMap::new();
    let mut queue: VecDeque<usize> = (0..nodes.len()).filter(|&i| indegree[i] == 0).collect();
    while let Some(i) = queue.pop_front() {
        let ((sheet, coord), expr, _) = &nodes[i];
        let ctx = Context {
            wb,
            sheet: *sheet,
            values: &values,
            externals,
        };
        let v = evaluate(expr, &ctx);
        values.insert((*sheet, *coord), v);
        for &s in &successors[i] {
            indegree[s] -= 1;
            if indegree[s] == 0 {
                queue.push_back(s);
            }
        }
    }
    for ((key, _, _), remaining) in nodes.iter().zip(&indegree) {
        if *remaining > 0 {
            values.insert(*key, Value::Error(ErrorKind::Cycle));
        }
    }

    for (si, sheet) in wb.sheets().iter().enumerate() {
        for (coord, cell) in sheet.cells() {
            if let CellContent::Literal(l) = &cell.content {
                let v = match l {
                    Literal::Number(n) => Value::Number(*n),
                    Literal::Text(t) => Value::Text(t.clone()),
                };
                values.insert((si, coord), v);
            }
        }
    }

    Values {
        sheet_names: wb.sheets().iter().map(|s| s.name().to_string()).collect(),
        map: values,
    }
}

/// Every cell whose value can change when `addr` changes, transitively.
pub fn dependents_of(wb: &Workbook, addr: &CellAddress) -> Result<BTreeSet<CellAddress>, WorkbookError> {
    wb.check_address(addr)?;
    let start = (wb.sheet_index(&addr.sheet).expect("checked"), addr.coord());
    let nodes = formula_targets(wb);

    let mut seen: HashSet<Key> = HashSet::new();
    let mut frontier = vec![start];
    while let Some((s, c)) = frontier.pop() {
        for (key, _, targets) in &nodes {
            if !seen.contains(key) && targets.iter().any(|t| t.covers(s, c)) {
                seen.insert(*key);
                frontier.push(*key);
            }
        }
    }
    Ok(seen
        .into_iter()
        .map(|(s, c)| CellAddress::from_coord(wb.sheets()[s].name(), c))
        .collect())
}

/// Data-entry fields: cells tagged as inputs by the programmer, and literal
/// cells read by at least one formula.
pub fn data_entry_cells(wb: &Workbook) -> BTreeSet<CellAddress> {
    let targets: Vec<Target> = formula_targets(wb)
        .into_iter()
        .flat_map(|(_, _, t)| t)
        .collect();
    let mut out = BTreeSet::new();
    for (si, sheet) in wb.sheets().iter().enumerate() {
        for (coord, cell) in sheet.cells() {
            let referenced_literal = cell.content.is_literal() && targets.iter().any(|t| t.covers(si, coord));
            if (cell.input && !cell.content.is_formula()) || referenced_literal {
                out.insert(CellAddress::from_coord(sheet.name(), coord));
            }
        }
    }
    out
}
