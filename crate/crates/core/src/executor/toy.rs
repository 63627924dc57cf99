//! A small self-instrumented JS-subset interpreter used as a hermetic target.
//!
//! Supported: number/string/boolean/null/undefined literals, array literals,
//! `let`/`var`/`const`, assignment (`=`, `+=`, `-=`, `*=`), `if`/`else`,
//! `while` with `break`/`continue`, blocks, the usual binary/unary operators,
//! indexing, `.length`, and a dozen builtins (`print`, `parseInt`, `max`,
//! `abs`, `decodeURI`, and the methods `push`, `pop`, `join`, `slice`,
//! `indexOf`, `charAt`, `repeat`).
//!
//! Every interesting control-flow decision hits an edge id in the coverage
//! map. Three planted memory-safety bugs sit behind specific deep paths and
//! end the run with a sanitizer-style report and a fatal signal.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;
use std::rc::Rc;

/// Edge id layout. Ids are folded into the map by masking.
pub mod edges {
    pub const ENTRY: u32 = 1;
    pub const EXIT_OK: u32 = 2;
    pub const EXIT_ERROR: u32 = 3;
    pub const EMPTY_PROGRAM: u32 = 4;
    pub const NONEMPTY_PROGRAM: u32 = 5;

    pub const LEX_BASE: u32 = 10;
    pub const PARSE_BASE: u32 = 50;
    /// statement kind (6) x loop depth (4) x if depth (3)
    pub const STMT_BASE: u32 = 150;
    /// binary op (15) x lhs type (5) x rhs type (5)
    pub const BINOP_BASE: u32 = 300;
    /// unary op (3) x type (5)
    pub const UNARY_BASE: u32 = 700;
    pub const ACCESS_BASE: u32 = 750;
    /// builtin (12) x 16 branch slots
    pub const BUILTIN_BASE: u32 = 800;
    pub const ERROR_BASE: u32 = 1000;
    pub const NEAR_MISS_BASE: u32 = 1050;
    pub const CRASH_BASE: u32 = 1080;

    pub const MAX_ID: u32 = 1100;
}

use edges::*;

pub const MAX_STEPS: u64 = 100_000;
const MAX_NESTING: usize = 48;
const MAX_STRING_LEN: usize = 1 << 16;
const MAX_ARRAY_LEN: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    Syntax,
    Type,
    Reference,
    Range,
    Uri,
    Internal,
}

impl ErrorKind {
    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::Syntax => "SyntaxError",
            ErrorKind::Type => "TypeError",
            ErrorKind::Reference => "ReferenceError",
            ErrorKind::Range => "RangeError",
            ErrorKind::Uri => "URIError",
            ErrorKind::Internal => "InternalError",
        }
    }

    fn edge(self) -> u32 {
        ERROR_BASE + self as u32
    }
}

/// The three planted bugs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlantedBug {
    /// `arr.slice(start, end)` with `start > end` on an array of length >= 3
    /// inside a loop.
    SliceOverflow,
    /// `str.repeat(n)` producing at least 100 chars inside an `if` nested in
    /// a loop.
    RepeatAssert,
    /// `arr.pop()` on an empty array that once held at least 4 items.
    PopAfterFree,
}

impl PlantedBug {
    pub const ALL: [PlantedBug; 3] = [
        PlantedBug::SliceOverflow,
        PlantedBug::RepeatAssert,
        PlantedBug::PopAfterFree,
    ];

    pub fn signal(self) -> i32 {
        match self {
            PlantedBug::SliceOverflow | PlantedBug::PopAfterFree => libc::SIGSEGV,
            PlantedBug::RepeatAssert => libc::SIGABRT,
        }
    }

    /// Sanitizer-style report. `pid` and `addr` vary run to run.
    pub fn report(self, pid: u32, addr: usize) -> String {
        let pc = addr.wrapping_mul(31) | 0x5500_0000_0000;
        let (title, access, frames): (&str, &str, [&str; 3]) = match self {
            PlantedBug::SliceOverflow => (
                "heap-buffer-overflow",
                "READ of size 8",
                ["toy_array_slice builtins.rs:212", "toy_call_method interp.rs:480", "toy_eval_expr interp.rs:301"],
            ),
            PlantedBug::RepeatAssert => (
                "assertion failure",
                "ABORT in string builder",
                ["toy_string_repeat builtins.rs:377", "toy_call_method interp.rs:480", "toy_exec_if interp.rs:122"],
            ),
            PlantedBug::PopAfterFree => (
                "heap-use-after-free",
                "READ of size 8",
                ["toy_array_pop builtins.rs:98", "toy_call_method interp.rs:480", "toy_eval_expr interp.rs:301"],
            ),
        };
        let mut out = String::new();
        let _ = writeln!(out, "=={pid}==ERROR: AddressSanitizer: {title} on address {addr:#x} at pc {pc:#x}");
        let _ = writeln!(out, "{access} at {addr:#x} thread T0");
        for (i, f) in frames.iter().enumerate() {
            let _ = writeln!(out, "    #{i} {:#x} in {f}", pc + i * 0x40);
        }
        let _ = writeln!(out, "=={pid}==ABORTING");
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ToyExit {
    Ok,
    Error { kind: ErrorKind, message: String },
    Crash(PlantedBug),
}

impl ToyExit {
    /// Exit code for a process wrapper (crashes raise a signal instead).
    pub fn exit_code(&self) -> i32 {
        match self {
            ToyExit::Ok => 0,
            _ => 1,
        }
    }

    /// The stderr line for error exits.
    pub fn message(&self) -> Option<String> {
        match self {
            ToyExit::Error { kind, message } => Some(format!("{}: {message}", kind.name())),
            _ => None,
        }
    }
}

/// Writes edge hits into a coverage buffer, optionally echoing a trace.
pub struct Tracer<'a> {
    cov: &'a mut [u8],
    mask: usize,
    trace: Option<&'a mut dyn Write>,
}

impl<'a> Tracer<'a> {
    /// `cov.len()` must be a power of two.
    pub fn new(cov: &'a mut [u8], trace: Option<&'a mut dyn Write>) -> Self {
        debug_assert!(cov.len().is_power_of_two());
        let mask = cov.len() - 1;
        Tracer { cov, mask, trace }
    }

    #[inline]
    pub fn hit(&mut self, id: u32) {
        let i = id as usize & self.mask;
        self.cov[i] = self.cov[i].saturating_add(1);
        if let Some(t) = self.trace.as_mut() {
            let _ = writeln!(t, "[trace] edge {id}");
        }
    }
}

/// Runs `source` to completion, recording coverage.
pub fn run(source: &[u8], tracer: &mut Tracer<'_>) -> ToyExit {
    tracer.hit(ENTRY);
    let text = String::from_utf8_lossy(source);
    let result = lex(&text, tracer)
        .and_then(|toks| {
            if toks.len() == 1 {
                tracer.hit(EMPTY_PROGRAM);
            } else {
                tracer.hit(NONEMPTY_PROGRAM);
            }
            Parser::new(toks, tracer).program()
        })
        .and_then(|prog| Interp::new(tracer).exec_program(&prog));
    match result {
        Ok(()) => {
            tracer.hit(EXIT_OK);
            ToyExit::Ok
        }
        Err(Fault::Error(kind, message)) => {
            tracer.hit(kind.edge());
            tracer.hit(EXIT_ERROR);
            ToyExit::Error { kind, message }
        }
        Err(Fault::Crash(bug)) => {
            tracer.hit(CRASH_BASE + bug as u32);
            ToyExit::Crash(bug)
        }
    }
}

/// Convenience wrapper returning the coverage buffer and a trace of edge ids.
pub fn run_traced(source: &[u8], map_len: usize) -> (ToyExit, Vec<u8>, Vec<u32>) {
    let mut cov = vec![0u8; map_len];
    let mut trace = Vec::new();
    let exit = {
        let mut tracer = Tracer::new(&mut cov, Some(&mut trace));
        run(source, &mut tracer)
    };
    let ids = String::from_utf8_lossy(&trace)
        .lines()
        .filter_map(|l| l.strip_prefix("[trace] edge ")?.parse().ok())
        .collect();
    (exit, cov, ids)
}

#[derive(Debug)]
enum Fault {
    Error(ErrorKind, String),
    Crash(PlantedBug),
}

type Res<T> = Result<T, Fault>;

fn err<T>(kind: ErrorKind, msg: impl Into<String>) -> Res<T> {
    Err(Fault::Error(kind, msg.into()))
}

// ---------------------------------------------------------------- lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Str(String),
    Ident(String),
    Kw(&'static str),
    Punct(&'static str),
    Eof,
}

const TOY_KEYWORDS: &[&str] = &[
    "let", "var", "const", "if", "else", "while", "break", "continue", "true", "false", "null",
    "undefined", "typeof",
];

/// Words the toy refuses with a syntax error.
const RESERVED: &[&str] = &[
    "function", "class", "for", "return", "new", "async", "await", "yield", "switch", "case",
    "try", "catch", "throw", "delete", "in", "of", "this", "do", "extends", "static", "import",
    "export", "super", "void", "with", "instanceof",
];

const TOY_PUNCT: &[&str] = &[
    "===", "!==", "==", "!=", "<=", ">=", "&&", "||", "+=", "-=", "*=", "(", ")", "{", "}", "[",
    "]", ";", ",", ".", "?", ":", "=", "<", ">", "+", "-", "*", "/", "%", "!",
];

fn lex(src: &str, t: &mut Tracer<'_>) -> Res<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            t.hit(LEX_BASE);
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            t.hit(LEX_BASE + 1);
            i += 2;
            while i < chars.len() && !(chars[i] == '*' && chars.get(i + 1) == Some(&'/')) {
                i += 1;
            }
            if i >= chars.len() {
                t.hit(LEX_BASE + 2);
                return err(ErrorKind::Syntax, "unterminated comment");
            }
            i += 2;
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            if c == '0' && matches!(chars.get(i + 1), Some('x' | 'X')) {
                t.hit(LEX_BASE + 3);
                i += 2;
                let hs = i;
                while i < chars.len() && chars[i].is_ascii_hexdigit() {
                    i += 1;
                }
                let digits: String = chars[hs..i].iter().collect();
                let v = u64::from_str_radix(&digits, 16).map_err(|_| {
                    Fault::Error(ErrorKind::Syntax, "invalid hexadecimal literal".into())
                })?;
                out.push(Tok::Num(v as f64));
            } else {
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                if i < chars.len() && chars[i] == '.' {
                    t.hit(LEX_BASE + 4);
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < chars.len() && matches!(chars[i], 'e' | 'E') {
                    t.hit(LEX_BASE + 5);
                    i += 1;
                    if i < chars.len() && matches!(chars[i], '+' | '-') {
                        i += 1;
                    }
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let v: f64 = text
                    .parse()
                    .map_err(|_| Fault::Error(ErrorKind::Syntax, format!("invalid number {text}")))?;
                t.hit(LEX_BASE + 6);
                out.push(Tok::Num(v));
            }
            if i < chars.len() && (chars[i].is_alphabetic() || chars[i] == '_') {
                t.hit(LEX_BASE + 7);
                return err(ErrorKind::Syntax, "identifier starts immediately after numeric literal");
            }
            continue;
        }
        if c == '"' || c == '\'' {
            t.hit(LEX_BASE + 8 + u32::from(c == '\''));
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None | Some('\n') => {
                        t.hit(LEX_BASE + 10);
                        return err(ErrorKind::Syntax, "Invalid or unexpected token");
                    }
                    Some('\\') => {
                        t.hit(LEX_BASE + 11);
                        let e = chars.get(i + 1).copied().unwrap_or('\\');
                        s.push(match e {
                            'n' => '\n',
                            't' => '\t',
                            other => other,
                        });
                        i += 2;
                    }
                    Some(&q) if q == c => {
                        i += 1;
                        break;
                    }
                    Some(&other) => {
                        s.push(other);
                        i += 1;
                    }
                }
            }
            if s.is_empty() {
                t.hit(LEX_BASE + 12);
            }
            out.push(Tok::Str(s));
            continue;
        }
        if c.is_alphabetic() || c == '_' || c == '$' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '$') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            if let Some(kw) = TOY_KEYWORDS.iter().find(|&&k| k == word) {
                t.hit(LEX_BASE + 13);
                out.push(Tok::Kw(kw));
            } else if let Some(pos) = RESERVED.iter().position(|&k| k == word) {
                t.hit(PARSE_BASE + 60 + pos as u32);
                return err(ErrorKind::Syntax, format!("Unexpected reserved word '{word}'"));
            } else {
                t.hit(LEX_BASE + 14);
                out.push(Tok::Ident(word));
            }
            continue;
        }
        if c == '`' {
            t.hit(LEX_BASE + 15);
            return err(ErrorKind::Syntax, "template literals are not supported");
        }
        let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
        match TOY_PUNCT.iter().position(|p| rest.starts_with(p)) {
            Some(pos) => {
                let p = TOY_PUNCT[pos];
                t.hit(LEX_BASE + 16 + (pos as u32 % 24));
                out.push(Tok::Punct(p));
                i += p.chars().count();
            }
            None => {
                t.hit(LEX_BASE + 40);
                return err(ErrorKind::Syntax, format!("Invalid or unexpected token '{c}'"));
            }
        }
    }
    out.push(Tok::Eof);
    Ok(out)
}

// ---------------------------------------------------------------- AST

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    StrictEq,
    StrictNe,
    Lt,
    Gt,
    Le,
    Ge,
    And,
    Or,
}

impl BinOp {
    fn from_punct(p: &str) -> Option<BinOp> {
        Some(match p {
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "/" => BinOp::Div,
            "%" => BinOp::Rem,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "===" => BinOp::StrictEq,
            "!==" => BinOp::StrictNe,
            "<" => BinOp::Lt,
            ">" => BinOp::Gt,
            "<=" => BinOp::Le,
            ">=" => BinOp::Ge,
            "&&" => BinOp::And,
            "||" => BinOp::Or,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum UnOp {
    Neg,
    Not,
    TypeOf,
}

#[derive(Debug, Clone)]
enum Expr {
    Num(f64),
    Str(Rc<str>),
    Bool(bool),
    Null,
    Undef,
    Var(String),
    Array(Vec<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Cond(Box<Expr>, Box<Expr>, Box<Expr>),
    Index(Box<Expr>, Box<Expr>),
    Member(Box<Expr>, String),
    Call(String, Vec<Expr>),
    MethodCall(Box<Expr>, String, Vec<Expr>),
    Assign(Option<BinOp>, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DeclKind {
    Let,
    Var,
    Const,
}

#[derive(Debug, Clone)]
enum Stmt {
    Decl(DeclKind, String, Option<Expr>),
    Expr(Expr),
    If(Expr, Box<Stmt>, Option<Box<Stmt>>),
    While(Expr, Box<Stmt>),
    Block(Vec<Stmt>),
    Break,
    Continue,
    Empty,
}

impl Stmt {
    fn kind_index(&self) -> u32 {
        match self {
            Stmt::Decl(..) => 0,
            Stmt::Expr(_) => 1,
            Stmt::If(..) => 2,
            Stmt::While(..) => 3,
            Stmt::Block(_) => 4,
            Stmt::Break | Stmt::Continue | Stmt::Empty => 5,
        }
    }
}

// ---------------------------------------------------------------- parser

struct Parser<'t, 'a> {
    toks: Vec<Tok>,
    pos: usize,
    depth: usize,
    t: &'t mut Tracer<'a>,
}

impl<'t, 'a> Parser<'t, 'a> {
    fn new(toks: Vec<Tok>, t: &'t mut Tracer<'a>) -> Self {
        Parser { toks, pos: 0, depth: 0, t }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Tok {
        let tok = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        tok
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Kw(q) if *q == k)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.next();
            true
        } else {
            false
        }
    }

    fn unexpected<T>(&mut self, edge: u32) -> Res<T> {
        self.t.hit(PARSE_BASE + 40 + edge % 20);
        let what = match self.peek() {
            Tok::Eof => "end of input".to_string(),
            Tok::Num(n) => format!("number {n}"),
            Tok::Str(_) => "string".to_string(),
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Kw(k) => format!("token '{k}'"),
            Tok::Punct(p) => format!("token '{p}'"),
        };
        err(ErrorKind::Syntax, format!("Unexpected {what}"))
    }

    fn expect_punct(&mut self, p: &str, edge: u32) -> Res<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.unexpected(edge)
        }
    }

    fn enter(&mut self) -> Res<()> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            self.t.hit(PARSE_BASE + 39);
            return err(ErrorKind::Range, "Maximum nesting depth exceeded");
        }
        Ok(())
    }

    fn program(&mut self) -> Res<Vec<Stmt>> {
        let mut stmts = Vec::new();
        while *self.peek() != Tok::Eof {
            stmts.push(self.statement()?);
        }
        Ok(stmts)
    }

    fn end_statement(&mut self) -> Res<()> {
        if self.eat_punct(";") {
            return Ok(());
        }
        if self.is_punct("}") || *self.peek() == Tok::Eof {
            self.t.hit(PARSE_BASE + 1);
            return Ok(());
        }
        self.unexpected(2)
    }

    fn statement(&mut self) -> Res<Stmt> {
        self.enter()?;
        let s = self.statement_inner();
        self.depth -= 1;
        s
    }

    fn statement_inner(&mut self) -> Res<Stmt> {
        match self.peek().clone() {
            Tok::Kw(k @ ("let" | "var" | "const")) => {
                self.next();
                let kind = match k {
                    "let" => DeclKind::Let,
                    "var" => DeclKind::Var,
                    _ => DeclKind::Const,
                };
                self.t.hit(PARSE_BASE + 2 + kind as u32);
                let name = match self.next() {
                    Tok::Ident(n) => n,
                    _ => return self.unexpected(5),
                };
                let init = if self.eat_punct("=") {
                    Some(self.expression()?)
                } else {
                    if kind == DeclKind::Const {
                        self.t.hit(PARSE_BASE + 5);
                        return err(ErrorKind::Syntax, "Missing initializer in const declaration");
                    }
                    None
                };
                self.end_statement()?;
                Ok(Stmt::Decl(kind, name, init))
            }
            Tok::Kw("if") => {
                self.next();
                self.t.hit(PARSE_BASE + 6);
                self.expect_punct("(", 6)?;
                let cond = self.expression()?;
                self.expect_punct(")", 7)?;
                let then = self.statement()?;
                let alt = if self.is_kw("else") {
                    self.next();
                    self.t.hit(PARSE_BASE + 7);
                    Some(Box::new(self.statement()?))
                } else {
                    None
                };
                Ok(Stmt::If(cond, Box::new(then), alt))
            }
            Tok::Kw("while") => {
                self.next();
                self.t.hit(PARSE_BASE + 8);
                self.expect_punct("(", 8)?;
                let cond = self.expression()?;
                self.expect_punct(")", 9)?;
                let body = self.statement()?;
                Ok(Stmt::While(cond, Box::new(body)))
            }
            Tok::Kw("break") => {
                self.next();
                self.t.hit(PARSE_BASE + 9);
                self.end_statement()?;
                Ok(Stmt::Break)
            }
            Tok::Kw("continue") => {
                self.next();
                self.t.hit(PARSE_BASE + 10);
                self.end_statement()?;
                Ok(Stmt::Continue)
            }
            Tok::Kw("else") => self.unexpected(10),
            Tok::Punct("{") => {
                self.next();
                self.t.hit(PARSE_BASE + 11);
                let mut body = Vec::new();
                while !self.is_punct("}") {
                    if *self.peek() == Tok::Eof {
                        return self.unexpected(11);
                    }
                    body.push(self.statement()?);
                }
                self.next();
                if body.is_empty() {
                    self.t.hit(PARSE_BASE + 12);
                }
                Ok(Stmt::Block(body))
            }
            Tok::Punct(";") => {
                self.next();
                self.t.hit(PARSE_BASE + 13);
                Ok(Stmt::Empty)
            }
            _ => {
                let e = self.expression()?;
                self.end_statement()?;
                Ok(Stmt::Expr(e))
            }
        }
    }

    fn expression(&mut self) -> Res<Expr> {
        self.enter()?;
        let e = self.assignment();
        self.depth -= 1;
        e
    }

    fn assignment(&mut self) -> Res<Expr> {
        let lhs = self.ternary()?;
        let op = match self.peek() {
            Tok::Punct("=") => None,
            Tok::Punct("+=") => Some(BinOp::Add),
            Tok::Punct("-=") => Some(BinOp::Sub),
            Tok::Punct("*=") => Some(BinOp::Mul),
            _ => return Ok(lhs),
        };
        self.next();
        if !matches!(lhs, Expr::Var(_) | Expr::Index(..)) {
            self.t.hit(PARSE_BASE + 14);
            return err(ErrorKind::Syntax, "Invalid left-hand side in assignment");
        }
        self.t.hit(PARSE_BASE + 15 + op.map_or(0, |o| o as u32 + 1));
        let rhs = self.expression()?;
        Ok(Expr::Assign(op, Box::new(lhs), Box::new(rhs)))
    }

    fn ternary(&mut self) -> Res<Expr> {
        let cond = self.binary(0)?;
        if self.eat_punct("?") {
            self.t.hit(PARSE_BASE + 20);
            let a = self.expression()?;
            self.expect_punct(":", 12)?;
            let b = self.expression()?;
            return Ok(Expr::Cond(Box::new(cond), Box::new(a), Box::new(b)));
        }
        Ok(cond)
    }

    fn binary(&mut self, level: usize) -> Res<Expr> {
        const LEVELS: [&[&str]; 6] = [
            &["||"],
            &["&&"],
            &["==", "!=", "===", "!=="],
            &["<", ">", "<=", ">="],
            &["+", "-"],
            &["*", "/", "%"],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        loop {
            let op = match self.peek() {
                Tok::Punct(p) if LEVELS[level].contains(p) => BinOp::from_punct(p).unwrap(),
                _ => return Ok(lhs),
            };
            self.next();
            self.t.hit(PARSE_BASE + 21 + level as u32);
            let rhs = self.binary(level + 1)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Res<Expr> {
        let op = match self.peek() {
            Tok::Punct("-") => UnOp::Neg,
            Tok::Punct("!") => UnOp::Not,
            Tok::Kw("typeof") => UnOp::TypeOf,
            _ => return self.postfix(),
        };
        self.next();
        self.enter()?;
        self.t.hit(PARSE_BASE + 27 + op as u32);
        let inner = self.unary();
        self.depth -= 1;
        Ok(Expr::Unary(op, Box::new(inner?)))
    }

    fn args(&mut self) -> Res<Vec<Expr>> {
        let mut args = Vec::new();
        if self.eat_punct(")") {
            return Ok(args);
        }
        loop {
            args.push(self.expression()?);
            if self.eat_punct(")") {
                return Ok(args);
            }
            self.expect_punct(",", 13)?;
        }
    }

    fn postfix(&mut self) -> Res<Expr> {
        let mut e = self.primary()?;
        loop {
            if self.eat_punct("[") {
                self.t.hit(PARSE_BASE + 30);
                let idx = self.expression()?;
                self.expect_punct("]", 14)?;
                e = Expr::Index(Box::new(e), Box::new(idx));
            } else if self.eat_punct(".") {
                let name = match self.next() {
                    Tok::Ident(n) => n,
                    _ => return self.unexpected(15),
                };
                if self.eat_punct("(") {
                    self.t.hit(PARSE_BASE + 31);
                    let args = self.args()?;
                    e = Expr::MethodCall(Box::new(e), name, args);
                } else {
                    self.t.hit(PARSE_BASE + 32);
                    e = Expr::Member(Box::new(e), name);
                }
            } else if self.is_punct("(") {
                let Expr::Var(name) = &e else {
                    self.t.hit(PARSE_BASE + 33);
                    return err(ErrorKind::Type, "expression is not a function");
                };
                let name = name.clone();
                self.next();
                self.t.hit(PARSE_BASE + 34);
                let args = self.args()?;
                e = Expr::Call(name, args);
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> Res<Expr> {
        match self.next() {
            Tok::Num(n) => {
                self.t.hit(PARSE_BASE + 35);
                Ok(Expr::Num(n))
            }
            Tok::Str(s) => {
                self.t.hit(PARSE_BASE + 36);
                Ok(Expr::Str(s.into()))
            }
            Tok::Ident(n) => Ok(Expr::Var(n)),
            Tok::Kw("true") => Ok(Expr::Bool(true)),
            Tok::Kw("false") => Ok(Expr::Bool(false)),
            Tok::Kw("null") => Ok(Expr::Null),
            Tok::Kw("undefined") => Ok(Expr::Undef),
            Tok::Punct("[") => {
                self.t.hit(PARSE_BASE + 37);
                let mut items = Vec::new();
                while !self.eat_punct("]") {
                    items.push(self.expression()?);
                    if !self.is_punct("]") {
                        self.expect_punct(",", 16)?;
                    }
                }
                Ok(Expr::Array(items))
            }
            Tok::Punct("(") => {
                self.t.hit(PARSE_BASE + 38);
                let e = self.expression()?;
                self.expect_punct(")", 17)?;
                Ok(e)
            }
            _ => {
                self.pos = self.pos.saturating_sub(1);
                self.unexpected(18)
            }
        }
    }
}

// ---------------------------------------------------------------- values

#[derive(Debug, Default)]
struct ArrayObj {
    items: Vec<Value>,
    high_water: usize,
}

#[derive(Debug, Clone)]
enum Value {
    Num(f64),
    Str(Rc<str>),
    Bool(bool),
    Null,
    Undef,
    Arr(Rc<RefCell<ArrayObj>>),
}

impl Value {
    fn type_index(&self) -> u32 {
        match self {
            Value::Num(_) => 0,
            Value::Str(_) => 1,
            Value::Bool(_) => 2,
            Value::Null | Value::Undef => 3,
            Value::Arr(_) => 4,
        }
    }

    fn type_name(&self) -> &'static str {
        match self {
            Value::Num(_) => "number",
            Value::Str(_) => "string",
            Value::Bool(_) => "boolean",
            Value::Null => "object",
            Value::Undef => "undefined",
            Value::Arr(_) => "object",
        }
    }

    fn array(items: Vec<Value>) -> Value {
        let high_water = items.len();
        Value::Arr(Rc::new(RefCell::new(ArrayObj { items, high_water })))
    }

    fn truthy(&self) -> bool {
        match self {
            Value::Num(n) => *n != 0.0 && !n.is_nan(),
            Value::Str(s) => !s.is_empty(),
            Value::Bool(b) => *b,
            Value::Null | Value::Undef => false,
            Value::Arr(_) => true,
        }
    }

    fn to_display(&self, depth: usize) -> String {
        match self {
            Value::Num(n) => fmt_num(*n),
            Value::Str(s) => s.to_string(),
            Value::Bool(b) => b.to_string(),
            Value::Null => "null".into(),
            Value::Undef => "undefined".into(),
            Value::Arr(a) if depth > 4 => {
                let _ = a;
                String::new()
            }
            Value::Arr(a) => a
                .borrow()
                .items
                .iter()
                .map(|v| match v {
                    Value::Null | Value::Undef => String::new(),
                    other => other.to_display(depth + 1),
                })
                .collect::<Vec<_>>()
                .join(","),
        }
    }

    fn to_number(&self) -> Option<f64> {
        match self {
            Value::Num(n) => Some(*n),
            Value::Str(s) => {
                let t = s.trim();
                Some(if t.is_empty() { 0.0 } else { t.parse().unwrap_or(f64::NAN) })
            }
            Value::Bool(b) => Some(f64::from(u8::from(*b))),
            Value::Null => Some(0.0),
            Value::Undef => Some(f64::NAN),
            Value::Arr(_) => None,
        }
    }
}

fn fmt_num(n: f64) -> String {
    if n.is_nan() {
        "NaN".into()
    } else if n.is_infinite() {
        if n > 0.0 { "Infinity".into() } else { "-Infinity".into() }
    } else if n == n.trunc() && n.abs() < 1e21 {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}

fn strict_eq(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Num(x), Value::Num(y)) => x == y,
        (Value::Str(x), Value::Str(y)) => x == y,
        (Value::Bool(x), Value::Bool(y)) => x == y,
        (Value::Null, Value::Null) | (Value::Undef, Value::Undef) => true,
        (Value::Arr(x), Value::Arr(y)) => Rc::ptr_eq(x, y),
        _ => false,
    }
}

fn loose_eq(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Null | Value::Undef, Value::Null | Value::Undef) => true,
        (Value::Null | Value::Undef, _) | (_, Value::Null | Value::Undef) => false,
        (Value::Arr(_), Value::Arr(_)) => strict_eq(a, b),
        (Value::Arr(_), _) => loose_eq(&Value::Str(a.to_display(0).into()), b),
        (_, Value::Arr(_)) => loose_eq(a, &Value::Str(b.to_display(0).into())),
        (Value::Str(x), Value::Str(y)) => x == y,
        _ => a.to_number() == b.to_number(),
    }
}

// ---------------------------------------------------------------- interpreter

enum Flow {
    Normal,
    Break,
    Continue,
}

struct Binding {
    value: Value,
    constant: bool,
}

struct Interp<'t, 'a> {
    t: &'t mut Tracer<'a>,
    scopes: Vec<HashMap<String, Binding>>,
    steps: u64,
    loop_depth: usize,
    if_depth: usize,
    out: usize,
}

const BUILTINS: &[&str] = &[
    "print", "parseInt", "max", "abs", "decodeURI", "push", "pop", "join", "slice", "indexOf",
    "charAt", "repeat",
];

fn builtin_index(name: &str) -> Option<u32> {
    BUILTINS.iter().position(|&b| b == name).map(|i| i as u32)
}

impl<'t, 'a> Interp<'t, 'a> {
    fn new(t: &'t mut Tracer<'a>) -> Self {
        Interp {
            t,
            scopes: vec![HashMap::new()],
            steps: 0,
            loop_depth: 0,
            if_depth: 0,
            out: 0,
        }
    }

    fn tick(&mut self) -> Res<()> {
        self.steps += 1;
        if self.steps > MAX_STEPS {
            self.t.hit(ERROR_BASE + 10);
            return err(ErrorKind::Internal, "too much recursion");
        }
        Ok(())
    }

    fn bhit(&mut self, builtin: u32, slot: u32) {
        self.t.hit(BUILTIN_BASE + builtin * 16 + slot % 16);
    }

    fn exec_program(&mut self, prog: &[Stmt]) -> Res<()> {
        for s in prog {
            match self.exec(s)? {
                Flow::Normal => {}
                Flow::Break | Flow::Continue => {
                    self.t.hit(ERROR_BASE + 11);
                    return err(ErrorKind::Syntax, "Illegal break or continue statement");
                }
            }
        }
        Ok(())
    }

    fn lookup(&self, name: &str) -> Option<&Binding> {
        self.scopes.iter().rev().find_map(|s| s.get(name))
    }

    fn lookup_mut(&mut self, name: &str) -> Option<&mut Binding> {
        self.scopes.iter_mut().rev().find_map(|s| s.get_mut(name))
    }

    fn exec(&mut self, s: &Stmt) -> Res<Flow> {
        self.tick()?;
        let ld = self.loop_depth.min(3) as u32;
        let id = self.if_depth.min(2) as u32;
        self.t.hit(STMT_BASE + s.kind_index() * 12 + ld * 3 + id);
        match s {
            Stmt::Decl(kind, name, init) => {
                let value = match init {
                    Some(e) => self.eval(e)?,
                    None => Value::Undef,
                };
                let scope = match kind {
                    DeclKind::Var => 0,
                    _ => self.scopes.len() - 1,
                };
                if *kind != DeclKind::Var {
                    if let Some(prev) = self.scopes[scope].get(name) {
                        if !(self.loop_depth > 0 && !prev.constant) {
                            self.t.hit(ERROR_BASE + 12);
                            return err(
                                ErrorKind::Syntax,
                                format!("Identifier '{name}' has already been declared"),
                            );
                        }
                    }
                }
                self.scopes[scope].insert(
                    name.clone(),
                    Binding {
                        value,
                        constant: *kind == DeclKind::Const,
                    },
                );
                Ok(Flow::Normal)
            }
            Stmt::Expr(e) => {
                self.eval(e)?;
                Ok(Flow::Normal)
            }
            Stmt::If(cond, then, alt) => {
                let c = self.eval(cond)?.truthy();
                self.t.hit(STMT_BASE + 72 + u32::from(c));
                self.if_depth += 1;
                let r = if c {
                    self.exec_scoped(then)
                } else if let Some(alt) = alt {
                    self.exec_scoped(alt)
                } else {
                    Ok(Flow::Normal)
                };
                self.if_depth -= 1;
                r
            }
            Stmt::While(cond, body) => {
                self.loop_depth += 1;
                let mut iterations = 0u32;
                let r = loop {
                    match self.eval(cond) {
                        Ok(v) if v.truthy() => {}
                        Ok(_) => break Ok(Flow::Normal),
                        Err(e) => break Err(e),
                    }
                    iterations += 1;
                    match self.exec_scoped(body) {
                        Ok(Flow::Break) => {
                            self.t.hit(STMT_BASE + 74);
                            break Ok(Flow::Normal);
                        }
                        Ok(Flow::Continue) => self.t.hit(STMT_BASE + 75),
                        Ok(Flow::Normal) => {}
                        Err(e) => break Err(e),
                    }
                };
                self.t.hit(STMT_BASE + 76 + iterations.min(3));
                self.loop_depth -= 1;
                r
            }
            Stmt::Block(body) => {
                self.scopes.push(HashMap::new());
                let mut flow = Ok(Flow::Normal);
                for s in body {
                    match self.exec(s) {
                        Ok(Flow::Normal) => {}
                        other => {
                            flow = other;
                            break;
                        }
                    }
                }
                self.scopes.pop();
                flow
            }
            Stmt::Break => Ok(Flow::Break),
            Stmt::Continue => Ok(Flow::Continue),
            Stmt::Empty => Ok(Flow::Normal),
        }
    }

    fn exec_scoped(&mut self, s: &Stmt) -> Res<Flow> {
        if matches!(s, Stmt::Block(_)) {
            self.exec(s)
        } else {
            self.scopes.push(HashMap::new());
            let r = self.exec(s);
            self.scopes.pop();
            r
        }
    }

    fn eval(&mut self, e: &Expr) -> Res<Value> {
        self.tick()?;
        match e {
            Expr::Num(n) => Ok(Value::Num(*n)),
            Expr::Str(s) => Ok(Value::Str(s.clone())),
            Expr::Bool(b) => Ok(Value::Bool(*b)),
            Expr::Null => Ok(Value::Null),
            Expr::Undef => Ok(Value::Undef),
            Expr::Var(name) => match self.lookup(name) {
                Some(b) => Ok(b.value.clone()),
                None => {
                    self.t.hit(ACCESS_BASE);
                    if builtin_index(name).is_some() {
                        self.t.hit(ACCESS_BASE + 1);
                    }
                    err(ErrorKind::Reference, format!("{name} is not defined"))
                }
            },
            Expr::Array(items) => {
                let mut vals = Vec::with_capacity(items.len());
                for it in items {
                    vals.push(self.eval(it)?);
                }
                self.t.hit(ACCESS_BASE + 2 + (vals.len() as u32).min(4));
                Ok(Value::array(vals))
            }
            Expr::Unary(op, inner) => {
                let v = self.eval(inner)?;
                self.t.hit(UNARY_BASE + *op as u32 * 5 + v.type_index());
                match op {
                    UnOp::Not => Ok(Value::Bool(!v.truthy())),
                    UnOp::TypeOf => Ok(Value::Str(v.type_name().into())),
                    UnOp::Neg => match v.to_number() {
                        Some(n) => Ok(Value::Num(-n)),
                        None => err(ErrorKind::Type, "cannot convert array to number"),
                    },
                }
            }
            Expr::Binary(op, l, r) => {
                let lv = self.eval(l)?;
                if matches!(op, BinOp::And | BinOp::Or) {
                    let short = match op {
                        BinOp::And => !lv.truthy(),
                        _ => lv.truthy(),
                    };
                    self.t.hit(BINOP_BASE + *op as u32 * 25 + lv.type_index() * 5 + u32::from(short));
                    if short {
                        return Ok(lv);
                    }
                    return self.eval(r);
                }
                let rv = self.eval(r)?;
                self.binop(*op, lv, rv)
            }
            Expr::Cond(c, a, b) => {
                let c = self.eval(c)?.truthy();
                self.t.hit(ACCESS_BASE + 7 + u32::from(c));
                self.eval(if c { a } else { b })
            }
            Expr::Index(target, idx) => {
                let tv = self.eval(target)?;
                let iv = self.eval(idx)?;
                self.index(&tv, &iv)
            }
            Expr::Member(target, name) => {
                let tv = self.eval(target)?;
                if name == "length" {
                    match &tv {
                        Value::Arr(a) => {
                            self.t.hit(ACCESS_BASE + 9);
                            Ok(Value::Num(a.borrow().items.len() as f64))
                        }
                        Value::Str(s) => {
                            self.t.hit(ACCESS_BASE + 10);
                            Ok(Value::Num(s.chars().count() as f64))
                        }
                        Value::Null | Value::Undef => {
                            self.t.hit(ACCESS_BASE + 11);
                            err(ErrorKind::Type, "Cannot read properties of undefined")
                        }
                        _ => {
                            self.t.hit(ACCESS_BASE + 12);
                            Ok(Value::Undef)
                        }
                    }
                } else {
                    self.t.hit(ACCESS_BASE + 13 + tv.type_index());
                    match tv {
                        Value::Null | Value::Undef => {
                            err(ErrorKind::Type, format!("Cannot read property '{name}' of undefined"))
                        }
                        _ => Ok(Value::Undef),
                    }
                }
            }
            Expr::Call(name, args) => {
                let vals = self.eval_args(args)?;
                self.call(name, vals)
            }
            Expr::MethodCall(target, name, args) => {
                let tv = self.eval(target)?;
                let vals = self.eval_args(args)?;
                self.method(tv, name, vals)
            }
            Expr::Assign(op, target, rhs) => self.assign(*op, target, rhs),
        }
    }

    fn eval_args(&mut self, args: &[Expr]) -> Res<Vec<Value>> {
        args.iter().map(|a| self.eval(a)).collect()
    }

    fn assign(&mut self, op: Option<BinOp>, target: &Expr, rhs: &Expr) -> Res<Value> {
        let rv = self.eval(rhs)?;
        match target {
            Expr::Var(name) => {
                let Some(binding) = self.lookup(name) else {
                    self.t.hit(ACCESS_BASE + 20);
                    return err(ErrorKind::Reference, format!("{name} is not defined"));
                };
                if binding.constant {
                    self.t.hit(ACCESS_BASE + 21);
                    return err(ErrorKind::Type, "Assignment to constant variable.");
                }
                let new = match op {
                    Some(op) => {
                        let old = binding.value.clone();
                        self.binop(op, old, rv)?
                    }
                    None => rv,
                };
                self.t.hit(ACCESS_BASE + 22 + new.type_index());
                self.lookup_mut(name).expect("checked above").value = new.clone();
                Ok(new)
            }
            Expr::Index(arr, idx) => {
                let av = self.eval(arr)?;
                let iv = self.eval(idx)?;
                let Value::Arr(a) = av else {
                    self.t.hit(ACCESS_BASE + 27);
                    return err(ErrorKind::Type, "Cannot assign to index of non-array");
                };
                let i = self.array_index(&iv)?;
                let new = match op {
                    Some(op) => {
                        let old = a.borrow().items.get(i).cloned().unwrap_or(Value::Undef);
                        self.binop(op, old, rv)?
                    }
                    None => rv,
                };
                let len = a.borrow().items.len();
                if i > len || i >= MAX_ARRAY_LEN {
                    self.t.hit(ACCESS_BASE + 28);
                    return err(ErrorKind::Range, "Invalid array index");
                }
                let mut obj = a.borrow_mut();
                if i == len {
                    self.t.hit(ACCESS_BASE + 29);
                    obj.items.push(new.clone());
                    obj.high_water = obj.high_water.max(obj.items.len());
                } else {
                    self.t.hit(ACCESS_BASE + 30);
                    obj.items[i] = new.clone();
                }
                Ok(new)
            }
            _ => err(ErrorKind::Syntax, "Invalid left-hand side in assignment"),
        }
    }

    fn array_index(&mut self, iv: &Value) -> Res<usize> {
        match iv {
            Value::Num(n) if *n >= 0.0 && n.fract() == 0.0 => Ok(*n as usize),
            Value::Num(_) => {
                self.t.hit(ACCESS_BASE + 31);
                err(ErrorKind::Range, "Invalid array index")
            }
            _ => {
                self.t.hit(ACCESS_BASE + 32);
                err(ErrorKind::Type, "Array index must be a number")
            }
        }
    }

    fn index(&mut self, tv: &Value, iv: &Value) -> Res<Value> {
        match tv {
            Value::Arr(a) => {
                let i = self.array_index(iv)?;
                let a = a.borrow();
                match a.items.get(i) {
                    Some(v) => {
                        self.t.hit(ACCESS_BASE + 33);
                        Ok(v.clone())
                    }
                    None => {
                        self.t.hit(ACCESS_BASE + 34);
                        err(ErrorKind::Range, format!("index {i} out of range for length {}", a.items.len()))
                    }
                }
            }
            Value::Str(s) => {
                let i = self.array_index(iv)?;
                match s.chars().nth(i) {
                    Some(c) => {
                        self.t.hit(ACCESS_BASE + 35);
                        Ok(Value::Str(c.to_string().into()))
                    }
                    None => {
                        self.t.hit(ACCESS_BASE + 36);
                        err(ErrorKind::Range, "string index out of range")
                    }
                }
            }
            other => {
                self.t.hit(ACCESS_BASE + 37 + other.type_index());
                err(ErrorKind::Type, format!("Cannot index a {}", other.type_name()))
            }
        }
    }

    fn binop(&mut self, op: BinOp, l: Value, r: Value) -> Res<Value> {
        self.t.hit(BINOP_BASE + op as u32 * 25 + l.type_index() * 5 + r.type_index());
        let num = |me: &mut Self, v: &Value| -> Res<f64> {
            v.to_number().ok_or_else(|| {
                me.t.hit(ERROR_BASE + 13);
                Fault::Error(ErrorKind::Type, "cannot convert array to number".into())
            })
        };
        Ok(match op {
            BinOp::Add => {
                if matches!(l, Value::Str(_) | Value::Arr(_)) || matches!(r, Value::Str(_) | Value::Arr(_)) {
                    let s = format!("{}{}", l.to_display(0), r.to_display(0));
                    if s.len() > MAX_STRING_LEN {
                        self.t.hit(ERROR_BASE + 14);
                        return err(ErrorKind::Range, "Invalid string length");
                    }
                    Value::Str(s.into())
                } else {
                    Value::Num(num(self, &l)? + num(self, &r)?)
                }
            }
            BinOp::Sub => Value::Num(num(self, &l)? - num(self, &r)?),
            BinOp::Mul => Value::Num(num(self, &l)? * num(self, &r)?),
            BinOp::Div => {
                let d = num(self, &r)?;
                if d == 0.0 {
                    self.t.hit(ERROR_BASE + 15);
                }
                Value::Num(num(self, &l)? / d)
            }
            BinOp::Rem => Value::Num(num(self, &l)? % num(self, &r)?),
            BinOp::Eq => Value::Bool(loose_eq(&l, &r)),
            BinOp::Ne => Value::Bool(!loose_eq(&l, &r)),
            BinOp::StrictEq => Value::Bool(strict_eq(&l, &r)),
            BinOp::StrictNe => Value::Bool(!strict_eq(&l, &r)),
            BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge => {
                let ord = match (&l, &r) {
                    (Value::Str(a), Value::Str(b)) => Some(a.cmp(b)),
                    _ => num(self, &l)?.partial_cmp(&num(self, &r)?),
                };
                Value::Bool(match ord {
                    None => false,
                    Some(o) => match op {
                        BinOp::Lt => o.is_lt(),
                        BinOp::Gt => o.is_gt(),
                        BinOp::Le => o.is_le(),
                        _ => o.is_ge(),
                    },
                })
            }
            BinOp::And | BinOp::Or => unreachable!("short-circuit handled in eval"),
        })
    }

    fn call(&mut self, name: &str, args: Vec<Value>) -> Res<Value> {
        if let Some(b) = self.lookup(name) {
            let ty = b.value.type_index();
            self.t.hit(ACCESS_BASE + 40 + ty);
            return err(ErrorKind::Type, format!("{name} is not a function"));
        }
        let Some(bi) = builtin_index(name) else {
            self.t.hit(ACCESS_BASE + 45);
            return err(ErrorKind::Reference, format!("{name} is not defined"));
        };
        self.bhit(bi, 0);
        self.bhit(bi, 1 + (args.len() as u32).min(3));
        match name {
            "print" => {
                let line: Vec<String> = args.iter().map(|a| a.to_display(0)).collect();
                self.out += line.join(" ").len();
                for a in &args {
                    self.bhit(bi, 5 + a.type_index());
                }
                Ok(Value::Undef)
            }
            "parseInt" => {
                let s = args.first().map(|v| v.to_display(0)).unwrap_or_default();
                let radix = match args.get(1) {
                    None => 10,
                    Some(v) => {
                        let r = v.to_number().unwrap_or(f64::NAN);
                        if !(2.0..=36.0).contains(&r) {
                            self.bhit(bi, 5);
                            return err(ErrorKind::Range, "radix must be between 2 and 36");
                        }
                        self.bhit(bi, 6);
                        r as u32
                    }
                };
                let t = s.trim();
                let (neg, digits) = match t.strip_prefix('-') {
                    Some(rest) => (true, rest),
                    None => (false, t),
                };
                let valid: String = digits.chars().take_while(|c| c.is_digit(radix)).collect();
                if valid.is_empty() {
                    self.bhit(bi, 7);
                    return Ok(Value::Num(f64::NAN));
                }
                if neg {
                    self.bhit(bi, 8);
                }
                let v = i64::from_str_radix(&valid[..valid.len().min(15)], radix).unwrap_or(0) as f64;
                Ok(Value::Num(if neg { -v } else { v }))
            }
            "max" => {
                if args.is_empty() {
                    self.bhit(bi, 5);
                    return Ok(Value::Num(f64::NEG_INFINITY));
                }
                let mut best = f64::NEG_INFINITY;
                for a in &args {
                    let Some(n) = a.to_number() else {
                        self.bhit(bi, 6);
                        return err(ErrorKind::Type, "max expects numbers");
                    };
                    if n.is_nan() {
                        self.bhit(bi, 7);
                        return Ok(Value::Num(f64::NAN));
                    }
                    best = best.max(n);
                }
                Ok(Value::Num(best))
            }
            "abs" => match args.first().and_then(Value::to_number) {
                Some(n) if n < 0.0 => {
                    self.bhit(bi, 5);
                    Ok(Value::Num(-n))
                }
                Some(n) => Ok(Value::Num(n)),
                None => {
                    self.bhit(bi, 6);
                    err(ErrorKind::Type, "abs expects a number")
                }
            },
            "decodeURI" => {
                let s = args.first().map(|v| v.to_display(0)).unwrap_or_default();
                self.decode_uri(bi, &s)
            }
            _ => {
                // Method names called as plain functions.
                self.bhit(bi, 15);
                err(ErrorKind::Reference, format!("{name} is not defined"))
            }
        }
    }

    fn decode_uri(&mut self, bi: u32, s: &str) -> Res<Value> {
        let bytes = s.as_bytes();
        let mut out = Vec::with_capacity(bytes.len());
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i] == b'%' {
                self.bhit(bi, 5);
                let hex = bytes.get(i + 1..i + 3).and_then(|h| std::str::from_utf8(h).ok());
                match hex.and_then(|h| u8::from_str_radix(h, 16).ok()) {
                    Some(b) => {
                        if b >= 0x80 {
                            self.bhit(bi, 6);
                        }
                        out.push(b);
                        i += 3;
                    }
                    None => {
                        self.bhit(bi, 7);
                        return err(ErrorKind::Uri, "URI malformed");
                    }
                }
            } else {
                out.push(bytes[i]);
                i += 1;
            }
        }
        match String::from_utf8(out) {
            Ok(s) => Ok(Value::Str(s.into())),
            Err(_) => {
                self.bhit(bi, 8);
                err(ErrorKind::Uri, "URI malformed")
            }
        }
    }

    fn method(&mut self, target: Value, name: &str, args: Vec<Value>) -> Res<Value> {
        let Some(bi) = builtin_index(name).filter(|&i| i >= 5) else {
            self.t.hit(ACCESS_BASE + 46 + target.type_index());
            return err(ErrorKind::Type, format!("{}.{name} is not a function", target.type_name()));
        };
        self.bhit(bi, 0);
        self.bhit(bi, 1 + target.type_index());
        let arg_num = |i: usize| args.get(i).and_then(Value::to_number);
        match (name, &target) {
            ("push", Value::Arr(a)) => {
                let mut obj = a.borrow_mut();
                if obj.items.len() + args.len() > MAX_ARRAY_LEN {
                    self.bhit(bi, 6);
                    return err(ErrorKind::Range, "Invalid array length");
                }
                self.bhit(bi, 7 + (args.len() as u32).min(2));
                obj.items.extend(args);
                obj.high_water = obj.high_water.max(obj.items.len());
                Ok(Value::Num(obj.items.len() as f64))
            }
            ("pop", Value::Arr(a)) => {
                let mut obj = a.borrow_mut();
                match obj.items.pop() {
                    Some(v) => {
                        self.bhit(bi, 7 + u32::from(obj.items.is_empty()));
                        Ok(v)
                    }
                    None if obj.high_water >= 4 => {
                        self.t.hit(NEAR_MISS_BASE);
                        Err(Fault::Crash(PlantedBug::PopAfterFree))
                    }
                    None => {
                        self.bhit(bi, 9 + u32::from(obj.high_water > 0));
                        Ok(Value::Undef)
                    }
                }
            }
            ("join", Value::Arr(a)) => {
                let sep = match args.first() {
                    None => ",".to_string(),
                    Some(v) => {
                        self.bhit(bi, 7 + v.type_index().min(2));
                        v.to_display(0)
                    }
                };
                let items: Vec<String> = a.borrow().items.iter().map(|v| v.to_display(1)).collect();
                let s = items.join(&sep);
                if s.len() > MAX_STRING_LEN {
                    self.bhit(bi, 10);
                    return err(ErrorKind::Range, "Invalid string length");
                }
                Ok(Value::Str(s.into()))
            }
            ("slice", Value::Arr(a)) => {
                let len = a.borrow().items.len();
                let (start, end) = self.slice_bounds(bi, len, arg_num(0), arg_num(1))?;
                if start > end {
                    if len >= 3 && self.loop_depth > 0 {
                        self.t.hit(NEAR_MISS_BASE + 1);
                        return Err(Fault::Crash(PlantedBug::SliceOverflow));
                    }
                    self.t.hit(NEAR_MISS_BASE + 2 + u32::from(len >= 3));
                    return Ok(Value::array(Vec::new()));
                }
                let items = a.borrow().items[start..end].to_vec();
                self.bhit(bi, 12 + u32::from(items.is_empty()));
                Ok(Value::array(items))
            }
            ("slice", Value::Str(s)) => {
                let chars: Vec<char> = s.chars().collect();
                let (start, end) = self.slice_bounds(bi, chars.len(), arg_num(0), arg_num(1))?;
                if start > end {
                    self.bhit(bi, 14);
                    return Ok(Value::Str("".into()));
                }
                Ok(Value::Str(chars[start..end].iter().collect::<String>().into()))
            }
            ("indexOf", Value::Arr(a)) => {
                let needle = args.first().cloned().unwrap_or(Value::Undef);
                let pos = a.borrow().items.iter().position(|v| strict_eq(v, &needle));
                self.bhit(bi, 7 + u32::from(pos.is_some()));
                Ok(Value::Num(pos.map_or(-1.0, |p| p as f64)))
            }
            ("indexOf", Value::Str(s)) => {
                let needle = args.first().map(|v| v.to_display(0)).unwrap_or_default();
                let pos = s.find(&needle).map(|b| s[..b].chars().count());
                self.bhit(bi, 9 + u32::from(pos.is_some()));
                Ok(Value::Num(pos.map_or(-1.0, |p| p as f64)))
            }
            ("charAt", Value::Str(s)) => {
                let i = arg_num(0).unwrap_or(0.0);
                match s.chars().nth(i.max(0.0) as usize).filter(|_| i >= 0.0) {
                    Some(c) => {
                        self.bhit(bi, 7);
                        Ok(Value::Str(c.to_string().into()))
                    }
                    None => {
                        self.bhit(bi, 8);
                        Ok(Value::Str("".into()))
                    }
                }
            }
            ("repeat", Value::Str(s)) => {
                let n = arg_num(0).unwrap_or(0.0);
                if n < 0.0 || n.is_infinite() {
                    self.bhit(bi, 7);
                    return err(ErrorKind::Range, "Invalid count value");
                }
                let n = n as usize;
                let total = s.len().saturating_mul(n);
                if total > MAX_STRING_LEN {
                    self.bhit(bi, 8);
                    return err(ErrorKind::Range, "Invalid string length");
                }
                if total >= 100 {
                    if self.if_depth > 0 && self.loop_depth > 0 {
                        self.t.hit(NEAR_MISS_BASE + 4);
                        return Err(Fault::Crash(PlantedBug::RepeatAssert));
                    }
                    self.t.hit(NEAR_MISS_BASE + 5 + u32::from(self.loop_depth > 0));
                }
                self.bhit(bi, 9 + u32::from(n == 0));
                Ok(Value::Str(s.repeat(n).into()))
            }
            (_, Value::Null | Value::Undef) => {
                self.bhit(bi, 14);
                err(ErrorKind::Type, format!("Cannot read property '{name}' of {}", target.to_display(0)))
            }
            _ => {
                self.bhit(bi, 15);
                err(ErrorKind::Type, format!("{}.{name} is not a function", target.type_name()))
            }
        }
    }

    fn slice_bounds(&mut self, bi: u32, len: usize, start: Option<f64>, end: Option<f64>) -> Res<(usize, usize)> {
        let clamp = |me: &mut Self, v: f64| -> usize {
            if v < 0.0 {
                me.bhit(bi, 9);
                (len as f64 + v).max(0.0) as usize
            } else {
                (v as usize).min(len)
            }
        };
        let s = match start {
            Some(v) if v.is_nan() => {
                self.bhit(bi, 10);
                0
            }
            Some(v) => clamp(self, v),
            None => 0,
        };
        let e = match end {
            Some(v) if v.is_nan() => {
                self.bhit(bi, 11);
                0
            }
            Some(v) => clamp(self, v),
            None => len,
        };
        Ok((s, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_src(src: &str) -> (ToyExit, Vec<u32>) {
        let (exit, _, trace) = run_traced(src.as_bytes(), 1 << 16);
        (exit, trace)
    }

    fn error_kind(src: &str) -> Option<ErrorKind> {
        match run_src(src).0 {
            ToyExit::Error { kind, .. } => Some(kind),
            _ => None,
        }
    }

    #[test]
    fn passes_simple_programs() {
        for src in [
            "",
            "1+2;",
            "let a = [1, 2, 3]; a.push(4); print(a.length);",
            "var s = 'ab'; let t = s.repeat(3); if (t.length == 6) { print(t); } else { print('no'); }",
            "let i = 0; while (i < 5) { i += 1; if (i == 3) { continue; } if (i > 3) break; }",
            "let x = parseInt('ff', 16) + max(1, 2, 3) + abs(-4); print(decodeURI('%41b'));",
            "const c = [1,[2,3]].join('-'); let y = c.indexOf('2') > 0 ? 'yes' : 'no';",
        ] {
            assert_eq!(run_src(src).0, ToyExit::Ok, "{src}");
        }
    }

    #[test]
    fn error_classes() {
        assert_eq!(error_kind("1+;"), Some(ErrorKind::Syntax));
        assert_eq!(error_kind("function f() {}"), Some(ErrorKind::Syntax));
        assert_eq!(error_kind("undefined_var;"), Some(ErrorKind::Reference));
        assert_eq!(error_kind("let a = [1,2][5];"), Some(ErrorKind::Range));
        assert_eq!(error_kind("let n = 5; n();"), Some(ErrorKind::Type));
        assert_eq!(error_kind("decodeURI('%zz');"), Some(ErrorKind::Uri));
        assert_eq!(error_kind("while (true) {}"), Some(ErrorKind::Internal));
        assert_eq!(error_kind("const k = 1; k = 2;"), Some(ErrorKind::Type));
        assert_eq!(error_kind("'ab'.repeat(-1);"), Some(ErrorKind::Range));
    }

    #[test]
    fn range_error_edge_is_recorded() {
        let (_, trace) = run_src("let a = [1,2][5];");
        assert!(trace.contains(&(ACCESS_BASE + 34)));
        assert!(trace.contains(&ErrorKind::Range.edge()));
    }

    #[test]
    fn empty_program_hits_only_entry_edges() {
        let (exit, trace) = run_src("");
        assert_eq!(exit, ToyExit::Ok);
        assert_eq!(trace, vec![ENTRY, EMPTY_PROGRAM, EXIT_OK]);
    }

    #[test]
    fn planted_bugs_trigger() {
        let slice = "let a = [1,2,3,4]; let i = 0; while (i < 1) { let b = a.slice(3, 1); i += 1; }";
        assert_eq!(run_src(slice).0, ToyExit::Crash(PlantedBug::SliceOverflow));
        let repeat = "let i = 0; while (i < 2) { if (i == 1) { let s = 'abcd'.repeat(30); } i += 1; }";
        assert_eq!(run_src(repeat).0, ToyExit::Crash(PlantedBug::RepeatAssert));
        let pop = "let a = [1,2,3,4]; while (a.length > 0) { a.pop(); } a.pop();";
        assert_eq!(run_src(pop).0, ToyExit::Crash(PlantedBug::PopAfterFree));
    }

    #[test]
    fn near_misses_do_not_crash() {
        for src in [
            "let a = [1,2,3,4]; let b = a.slice(3, 1);",
            "let s = 'abcd'.repeat(30);",
            "let a = [1,2]; a.pop(); a.pop(); a.pop();",
        ] {
            assert_eq!(run_src(src).0, ToyExit::Ok, "{src}");
        }
    }

    #[test]
    fn coverage_is_deterministic() {
        let src = b"let a = [1,2]; while (a.length < 9) { a.push(a.length * 2); } print(a.join(':'));";
        let (_, c1, _) = run_traced(src, 1 << 16);
        let (_, c2, _) = run_traced(src, 1 << 16);
        assert_eq!(c1, c2);
    }

    #[test]
    fn report_mentions_title() {
        let r = PlantedBug::PopAfterFree.report(42, 0x6020_0000_0010);
        assert!(r.contains("heap-use-after-free"));
        assert_eq!(r.lines().count(), 6);
    }
}
