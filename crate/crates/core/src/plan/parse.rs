use std::collections::BTreeMap;

use thiserror::Error;

use super::{BestMode, CmpOp, Expr, Literal, Param, Plan, SortOrder, Step};
use crate::registry::AttributeKind;

pub const RESERVED_WORDS: &[&str] = &[
    "plan", "let", "call", "foreach", "in", "yield", "filter", "by", "argmax", "argmin", "sort", "asc", "desc", "take",
    "return",
];

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PlanParseError {
    #[error("plan must declare params and result")]
    Empty,
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("line {line}, column {column}: reserved word `{word}` cannot be used as a name")]
    Reserved { line: usize, column: usize, word: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    Sym(&'static str),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    col: usize,
}

const SYMBOLS: &[&str] = &["==", "!=", "<=", ">=", "<", ">", "(", ")", ",", "=", ".", "[", "]", "{", "}", ":"];

fn syntax(line: usize, column: usize, message: impl Into<String>) -> PlanParseError {
    PlanParseError::Syntax { line, column, message: message.into() }
}

fn tokenize(text: &str, line: usize) -> Result<Vec<Token>, PlanParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c == '#' {
            break;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), col });
        } else if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            i += 1;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            let n = s.parse::<i64>().map_err(|_| syntax(line, col, format!("integer out of range: {s}")))?;
            out.push(Token { tok: Tok::Int(n), col });
        } else if c == '"' {
            i += 1;
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None => return Err(syntax(line, col, "unterminated string")),
                    Some('"') => {
                        i += 1;
                        break;
                    }
                    Some('\\') => {
                        let esc = chars.get(i + 1).ok_or_else(|| syntax(line, i + 1, "unterminated escape"))?;
                        s.push(match esc {
                            'n' => '\n',
                            't' => '\t',
                            '"' => '"',
                            '\\' => '\\',
                            other => return Err(syntax(line, i + 1, format!("unknown escape `\\{other}`"))),
                        });
                        i += 2;
                    }
                    Some(ch) => {
                        s.push(*ch);
                        i += 1;
                    }
                }
            }
            out.push(Token { tok: Tok::Str(s), col });
        } else {
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let sym = SYMBOLS
                .iter()
                .find(|s| rest.starts_with(**s))
                .ok_or_else(|| syntax(line, col, format!("unexpected character `{c}`")))?;
            i += sym.len();
            out.push(Token { tok: Tok::Sym(sym), col });
        }
    }
    Ok(out)
}

/// Cursor over one tokenized line.
struct Line {
    no: usize,
    toks: Vec<Token>,
    pos: usize,
    end_col: usize,
}

impl Line {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |t| t.col)
    }

    fn err(&self, message: impl Into<String>) -> PlanParseError {
        syntax(self.no, self.col(), message)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        self.pos += 1;
        t
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn expect_end(&self) -> Result<(), PlanParseError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.err("unexpected trailing input"))
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(x)) if *x == s)
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(x)) if x == w)
    }

    fn sym(&mut self, s: &str) -> Result<(), PlanParseError> {
        if self.is_sym(s) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected `{s}`")))
        }
    }

    fn word(&mut self, w: &str) -> Result<(), PlanParseError> {
        if self.is_word(w) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected `{w}`")))
        }
    }

    /// Any identifier, reserved or not (field names, API names).
    fn ident(&mut self) -> Result<String, PlanParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err("expected identifier")),
        }
    }

    /// An identifier usable as a variable or parameter name.
    fn name(&mut self) -> Result<String, PlanParseError> {
        let col = self.col();
        let s = self.ident()?;
        if RESERVED_WORDS.contains(&s.as_str()) {
            return Err(PlanParseError::Reserved { line: self.no, column: col, word: s });
        }
        Ok(s)
    }

    fn int(&mut self) -> Result<i64, PlanParseError> {
        match self.peek() {
            Some(Tok::Int(n)) => {
                let n = *n;
                self.pos += 1;
                Ok(n)
            }
            _ => Err(self.err("expected integer")),
        }
    }

    fn usize(&mut self) -> Result<usize, PlanParseError> {
        let col = self.col();
        let n = self.int()?;
        usize::try_from(n).map_err(|_| syntax(self.no, col, "expected a non-negative integer"))
    }

    fn literal(&mut self) -> Result<Literal, PlanParseError> {
        match self.next() {
            Some(Tok::Int(n)) => Ok(Literal::Int(n)),
            Some(Tok::Str(s)) => Ok(Literal::Str(s)),
            _ => {
                self.pos -= 1;
                Err(self.err("expected literal"))
            }
        }
    }

    fn expr(&mut self) -> Result<Expr, PlanParseError> {
        let mut e = match self.peek() {
            Some(Tok::Int(_)) | Some(Tok::Str(_)) => Expr::Lit(self.literal()?),
            Some(Tok::Ident(_)) => Expr::Var(self.name()?),
            _ => return Err(self.err("expected expression")),
        };
        loop {
            if self.is_sym(".") {
                self.pos += 1;
                let field = self.ident()?;
                e = e.field(&field);
            } else if self.is_sym("[") {
                self.pos += 1;
                let index = self.usize()?;
                self.sym("]")?;
                e = e.index(index);
            } else {
                return Ok(e);
            }
        }
    }
}

struct Parser {
    lines: Vec<Line>,
    cur: usize,
}

impl Parser {
    fn new(source: &str) -> Result<Self, PlanParseError> {
        let mut lines = Vec::new();
        for (i, text) in source.lines().enumerate() {
            let toks = tokenize(text, i + 1)?;
            if !toks.is_empty() {
                lines.push(Line { no: i + 1, toks, pos: 0, end_col: text.chars().count() + 1 });
            }
        }
        Ok(Parser { lines, cur: 0 })
    }

    fn line(&mut self) -> Option<&mut Line> {
        self.lines.get_mut(self.cur)
    }

    fn last_line_no(&self) -> usize {
        self.lines.last().map_or(1, |l| l.no)
    }

    fn header(&mut self) -> Result<Vec<Param>, PlanParseError> {
        let l = self.line().ok_or(PlanParseError::Empty)?;
        if !l.is_word("plan") {
            return Err(l.err("expected `plan(...)` header"));
        }
        l.pos += 1;
        l.sym("(")?;
        let mut params = Vec::new();
        while !l.is_sym(")") {
            if !params.is_empty() {
                l.sym(",")?;
            }
            let name = l.name()?;
            l.sym(":")?;
            let col = l.col();
            let kind_word = l.ident()?;
            let kind = AttributeKind::parse(&kind_word)
                .ok_or_else(|| syntax(l.no, col, format!("unknown kind `{kind_word}`")))?;
            params.push(Param { name, kind });
        }
        l.sym(")")?;
        l.expect_end()?;
        self.cur += 1;
        Ok(params)
    }

    /// Parses steps until a line starting with one of `stops`.
    fn block(&mut self, stops: &[&str]) -> Result<Vec<Step>, PlanParseError> {
        let mut steps = Vec::new();
        loop {
            let last = self.last_line_no();
            let Some(l) = self.line() else {
                return Err(syntax(last + 1, 1, format!("expected `{}`", stops.join("` or `"))));
            };
            if stops.iter().any(|s| l.is_word(s)) {
                return Ok(steps);
            }
            if !l.is_word("let") {
                return Err(l.err("expected `let` step"));
            }
            steps.push(self.step()?);
        }
    }

    fn step(&mut self) -> Result<Step, PlanParseError> {
        let l = self.lines.get_mut(self.cur).expect("checked by caller");
        l.word("let")?;
        let bind = l.name()?;
        l.sym("=")?;
        let step = if l.is_word("call") {
            l.pos += 1;
            let api = l.ident()?;
            l.sym("(")?;
            let mut args = BTreeMap::new();
            while !l.is_sym(")") {
                if !args.is_empty() {
                    l.sym(",")?;
                }
                let col = l.col();
                let name = l.ident()?;
                l.sym("=")?;
                let value = l.expr()?;
                if args.insert(name.clone(), value).is_some() {
                    return Err(syntax(l.no, col, format!("duplicate argument `{name}`")));
                }
            }
            l.sym(")")?;
            Step::Call { bind, api, args }
        } else if l.is_word("foreach") {
            l.pos += 1;
            let var = l.name()?;
            l.word("in")?;
            let over = l.expr()?;
            l.sym("{")?;
            l.expect_end()?;
            self.cur += 1;
            let body = self.block(&["yield"])?;
            let l = self.lines.get_mut(self.cur).expect("block stopped on yield");
            l.word("yield")?;
            let collect = l.expr()?;
            if l.is_sym("}") {
                l.pos += 1;
                l.expect_end()?;
            } else {
                l.expect_end()?;
                self.cur += 1;
                let last = self.last_line_no();
                let l = self.line().ok_or_else(|| syntax(last + 1, 1, "expected `}`"))?;
                l.sym("}")?;
                l.expect_end()?;
            }
            self.cur += 1;
            return Ok(Step::ForEach { bind, var, over, body, collect });
        } else if l.is_word("filter") {
            l.pos += 1;
            let over = l.expr()?;
            l.word("by")?;
            let field = l.ident()?;
            let cmp = match l.next() {
                Some(Tok::Sym(s)) => match s {
                    "==" => CmpOp::Eq,
                    "!=" => CmpOp::Ne,
                    "<" => CmpOp::Lt,
                    "<=" => CmpOp::Le,
                    ">" => CmpOp::Gt,
                    ">=" => CmpOp::Ge,
                    _ => {
                        l.pos -= 1;
                        return Err(l.err("expected comparison operator"));
                    }
                },
                _ => {
                    l.pos -= 1;
                    return Err(l.err("expected comparison operator"));
                }
            };
            let value = l.literal()?;
            Step::Filter { bind, over, field, cmp, value }
        } else if l.is_word("argmax") || l.is_word("argmin") {
            let mode = if l.is_word("argmax") { BestMode::Max } else { BestMode::Min };
            l.pos += 1;
            let over = l.expr()?;
            l.word("by")?;
            let field = l.ident()?;
            Step::ArgBest { bind, over, field, mode }
        } else if l.is_word("sort") {
            l.pos += 1;
            let over = l.expr()?;
            l.word("by")?;
            let field = l.ident()?;
            let order = if l.is_word("asc") {
                SortOrder::Asc
            } else if l.is_word("desc") {
                SortOrder::Desc
            } else {
                return Err(l.err("expected `asc` or `desc`"));
            };
            l.pos += 1;
            Step::SortBy { bind, over, field, order }
        } else if l.is_word("take") {
            l.pos += 1;
            let over = l.expr()?;
            let k = l.usize()?;
            Step::Take { bind, over, k }
        } else {
            let col = l.col();
            match l.expr()? {
                Expr::Field { of, field } => Step::Select { bind, from: *of, field },
                _ => return Err(syntax(l.no, col, "expected a step or a field selection")),
            }
        };
        let l = self.lines.get_mut(self.cur).expect("current line");
        l.expect_end()?;
        self.cur += 1;
        Ok(step)
    }

    fn parse(mut self) -> Result<Plan, PlanParseError> {
        if self.lines.is_empty() {
            return Err(PlanParseError::Empty);
        }
        let params = self.header()?;
        let body = self.block(&["return"])?;
        let l = self.lines.get_mut(self.cur).expect("block stopped on return");
        l.word("return")?;
        let result = l.expr()?;
        l.expect_end()?;
        self.cur += 1;
        if let Some(extra) = self.line() {
            return Err(extra.err("unexpected input after `return`"));
        }
        Ok(Plan { params, body, result })
    }
}

pub fn parse_plan(text: &str) -> Result<Plan, PlanParseError> {
    Parser::new(text)?.parse()
}
