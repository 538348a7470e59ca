use super::{BinaryOp, CellRef, Expr, ExternalRef, FormulaError, Function, RangeRef};
use crate::address::{validate_sheet_name, AddressError, Coord};

/// Parses formula source text. The text must begin with `=`.
pub fn parse_formula(source: &str) -> Result<Expr, FormulaError> {
    let chars: Vec<char> = source.chars().collect();
    if chars.first() != Some(&'=') {
        return Err(syntax(0, "formula must begin with `=`"));
    }
    let mut p = Parser { chars, pos: 1 };
    let expr = p.expr()?;
    p.skip_ws();
    if p.pos < p.chars.len() {
        return Err(syntax(p.pos, format!("unexpected `{}`", p.chars[p.pos])));
    }
    Ok(expr)
}

fn syntax(offset: usize, message: impl Into<String>) -> FormulaError {
    FormulaError::Syntax {
        offset,
        message: message.into(),
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, ahead: usize) -> Option<char> {
        self.chars.get(self.pos + ahead).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), FormulaError> {
        self.skip_ws();
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("expected `{c}`")))
        }
    }

    fn unexpected(&self, what: &str) -> FormulaError {
        match self.peek() {
            Some(c) => syntax(self.pos, format!("{what}, found `{c}`")),
            None => syntax(self.pos, format!("{what}, found end of input")),
        }
    }

    fn expr(&mut self) -> Result<Expr, FormulaError> {
        let mut lhs = self.concat()?;
        loop {
            self.skip_ws();
            let op = match (self.peek(), self.peek_at(1)) {
                (Some('<'), Some('>')) => (BinaryOp::Ne, 2),
                (Some('<'), Some('=')) => (BinaryOp::Le, 2),
                (Some('>'), Some('=')) => (BinaryOp::Ge, 2),
                (Some('<'), _) => (BinaryOp::Lt, 1),
                (Some('>'), _) => (BinaryOp::Gt, 1),
                (Some('='), _) => (BinaryOp::Eq, 1),
                _ => return Ok(lhs),
            };
            self.pos += op.1;
            let rhs = self.concat()?;
            lhs = Expr::Binary(op.0, Box::new(lhs), Box::new(rhs));
        }
    }

    fn concat(&mut self) -> Result<Expr, FormulaError> {
        let mut lhs = self.additive()?;
        loop {
            self.skip_ws();
            if !self.eat('&') {
                return Ok(lhs);
            }
            let rhs = self.additive()?;
            lhs = Expr::Binary(BinaryOp::Concat, Box::new(lhs), Box::new(rhs));
        }
    }

    fn additive(&mut self) -> Result<Expr, FormulaError> {
        let mut lhs = self.term()?;
        loop {
            self.skip_ws();
            let op = match self.peek() {
                Some('+') => BinaryOp::Add,
                Some('-') => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, FormulaError> {
        let mut lhs = self.power()?;
        loop {
            self.skip_ws();
            let op = match self.peek() {
                Some('*') => BinaryOp::Mul,
                Some('/') => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.power()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    // `^` is left-associative and binds looser than unary minus, as in Excel.
    fn power(&mut self) -> Result<Expr, FormulaError> {
        let mut lhs = self.unary()?;
        loop {
            self.skip_ws();
            if !self.eat('^') {
                return Ok(lhs);
            }
            let rhs = self.unary()?;
            lhs = Expr::Binary(BinaryOp::Pow, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, FormulaError> {
        self.skip_ws();
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, FormulaError> {
        self.skip_ws();
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some('"') => self.string(),
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Some('[') => self.external(),
            Some('\'') => {
                let sheet = self.quoted_sheet()?;
                if !self.eat('!') {
                    return Err(self.unexpected("expected `!` after sheet name"));
                }
                self.reference(Some(sheet))
            }
            Some(c) if c.is_ascii_alphabetic() || c == '_' => self.name(),
            _ => Err(self.unexpected("expected an operand")),
        }
    }

    fn number(&mut self) -> Result<Expr, FormulaError> {
        let start = self.pos;
        let digits = |p: &mut Parser| {
            let s = p.pos;
            while p.peek().is_some_and(|c| c.is_ascii_digit()) {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut count = digits(self);
        if self.eat('.') {
            count += digits(self);
        }
        if count == 0 {
            return Err(syntax(start, "malformed number"));
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some('+' | '-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        match text.parse::<f64>() {
            Ok(n) if n.is_finite() => Ok(Expr::Number(n)),
            _ => Err(syntax(start, format!("number `{text}` out of range"))),
        }
    }

    fn string(&mut self) -> Result<Expr, FormulaError> {
        let start = self.pos;
        self.pos += 1;
        let mut out = String::new();
        loop {
            match self.peek() {
                None => return Err(syntax(start, "unterminated string")),
                Some('"') if self.peek_at(1) == Some('"') => {
                    out.push('"');
                    self.pos += 2;
                }
                Some('"') => {
                    self.pos += 1;
                    return Ok(Expr::Text(out));
                }
                Some(c) => {
                    out.push(c);
                    self.pos += 1;
                }
            }
        }
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
        {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn quoted_sheet(&mut self) -> Result<String, FormulaError> {
        let start = self.pos;
        self.pos += 1;
        let mut name = String::new();
        loop {
            match self.peek() {
                None => return Err(syntax(start, "unterminated sheet name")),
                Some('\'') if self.peek_at(1) == Some('\'') => {
                    name.push('\'');
                    self.pos += 2;
                }
                Some('\'') => {
                    self.pos += 1;
                    break;
                }
                Some(c) => {
                    name.push(c);
                    self.pos += 1;
                }
            }
        }
        validate_sheet_name(&name).map_err(|e| syntax(start, e.to_string()))?;
        Ok(name)
    }

    fn coord(&mut self) -> Result<Coord, FormulaError> {
        let start = self.pos;
        if !self.peek().is_some_and(|c| c.is_ascii_alphabetic()) {
            return Err(self.unexpected("expected a cell reference"));
        }
        let text = self.ident();
        coord_at(&text, start)
    }

    fn reference(&mut self, sheet: Option<String>) -> Result<Expr, FormulaError> {
        let first = self.coord()?;
        self.range_tail(sheet, first)
    }

    fn range_tail(&mut self, sheet: Option<String>, first: Coord) -> Result<Expr, FormulaError> {
        if self.eat(':') {
            let end = self.coord()?;
            Ok(Expr::Range(RangeRef {
                sheet,
                start: first,
                end,
            }))
        } else {
            Ok(Expr::Ref(CellRef {
                sheet,
                coord: first,
            }))
        }
    }

    fn name(&mut self) -> Result<Expr, FormulaError> {
        let start = self.pos;
        let word = self.ident();
        match self.peek() {
            Some('(') => {
                let func = Function::from_name(&word)
                    .ok_or_else(|| syntax(start, format!("unknown function `{word}`")))?;
                self.pos += 1;
                let args = self.args()?;
                func.check_arity(args.len())?;
                Ok(Expr::Call(func, args))
            }
            Some('!') => {
                self.pos += 1;
                self.reference(Some(word))
            }
            _ => {
                let coord = coord_at(&word, start)?;
                self.range_tail(None, coord)
            }
        }
    }

    fn args(&mut self) -> Result<Vec<Expr>, FormulaError> {
        let mut args = Vec::new();
        self.skip_ws();
        if self.eat(')') {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            self.skip_ws();
            if self.eat(',') {
                continue;
            }
            if self.eat(')') {
                return Ok(args);
            }
            return Err(self.unexpected("expected `,` or `)`"));
        }
    }

    fn external(&mut self) -> Result<Expr, FormulaError> {
        let start = self.pos;
        self.pos += 1;
        let mut book = String::new();
        loop {
            match self.peek() {
                None => return Err(syntax(start, "unterminated external book name")),
                Some(']') => {
                    self.pos += 1;
                    break;
                }
                Some(c) if c.is_control() || c == '[' => {
                    return Err(syntax(self.pos, "invalid character in book name"))
                }
                Some(c) => {
                    book.push(c);
                    self.pos += 1;
                }
            }
        }
        if book.is_empty() {
            return Err(syntax(start, "empty external book name"));
        }
        let sheet = match self.peek() {
            Some('\'') => self.quoted_sheet()?,
            Some(c) if c.is_ascii_alphabetic() || c == '_' => self.ident(),
            _ => return Err(self.unexpected("expected a sheet name")),
        };
        if !self.eat('!') {
            return Err(self.unexpected("expected `!` after sheet name"));
        }
        let coord = self.coord()?;
        Ok(Expr::External(ExternalRef { book, sheet, coord }))
    }
}

fn coord_at(text: &str, offset: usize) -> Result<Coord, FormulaError> {
    Coord::parse(text).map_err(|e| match e {
        AddressError::OutOfRange(_) => syntax(offset, format!("address `{text}` outside the grid")),
        _ => syntax(offset, format!("unknown name `{text}`")),
    })
}
