//! JS-flavored lexer producing the token substrate for mask mutation.
//!
//! The lexer is total: comments are dropped, anything it cannot place in a
//! token class becomes a one-character punctuator.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Identifier,
    Keyword,
    Number,
    String,
    Punctuator,
    TemplateChunk,
    Regex,
    /// A mask slot (`<extra_id_k>`); never produced by [`tokenize`].
    Sentinel,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub text: String,
    pub kind: TokenKind,
}

impl Token {
    pub fn new(text: impl Into<String>, kind: TokenKind) -> Self {
        Token {
            text: text.into(),
            kind,
        }
    }

    pub fn sentinel(index: usize) -> Self {
        Token::new(sentinel_text(index), TokenKind::Sentinel)
    }

    pub fn is_sentinel(&self) -> bool {
        self.kind == TokenKind::Sentinel
    }
}

pub fn sentinel_text(index: usize) -> String {
    format!("<extra_id_{index}>")
}

/// Parses `<extra_id_k>` back to `k`.
pub fn sentinel_index(text: &str) -> Option<usize> {
    text.strip_prefix("<extra_id_")?.strip_suffix('>')?.parse().ok()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenStream {
    tokens: Vec<Token>,
}

impl TokenStream {
    pub fn new(tokens: Vec<Token>) -> Self {
        TokenStream { tokens }
    }

    /// Re-lexes each text as a standalone token; sentinel strings map back
    /// to sentinel tokens. Used for fills and wire payloads.
    pub fn from_texts<S: AsRef<str>>(texts: &[S]) -> Self {
        TokenStream::new(texts.iter().map(|t| classify_text(t.as_ref())).collect())
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn into_tokens(self) -> Vec<Token> {
        self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn texts(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.text.clone()).collect()
    }

    pub fn kinds(&self) -> Vec<TokenKind> {
        self.tokens.iter().map(|t| t.kind).collect()
    }

    pub fn sentinel_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.is_sentinel()).count()
    }

    /// Single-space join.
    pub fn detokenize(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&t.text);
        }
        out
    }
}

const KEYWORDS: &[&str] = &[
    "async", "await", "break", "case", "catch", "class", "const", "continue", "debugger",
    "default", "delete", "do", "else", "export", "extends", "false", "finally", "for",
    "function", "if", "import", "in", "instanceof", "let", "new", "null", "of", "return",
    "static", "super", "switch", "this", "throw", "true", "try", "typeof", "var", "void",
    "while", "with", "yield",
];

/// Longest first so the scan below is longest-match.
const PUNCTUATORS: &[&str] = &[
    ">>>=", "...", "===", "!==", "**=", "<<=", ">>=", ">>>", "&&=", "||=", "??=", "=>", "==",
    "!=", "<=", ">=", "&&", "||", "??", "?.", "++", "--", "+=", "-=", "*=", "/=", "%=", "&=",
    "|=", "^=", "**", "<<", ">>", "{", "}", "(", ")", "[", "]", ";", ",", "<", ">", "+", "-",
    "*", "/", "%", "&", "|", "^", "!", "~", "?", ":", "=", ".", "@", "#",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

fn is_ident_start(c: char) -> bool {
    c == '_' || c == '$' || c.is_alphabetic()
}

fn is_ident_continue(c: char) -> bool {
    c == '_' || c == '$' || c.is_alphanumeric()
}

/// Kind of a token seen in isolation (fill tokens arrive without context).
pub fn classify_text(text: &str) -> Token {
    if sentinel_index(text).is_some() {
        return Token::new(text, TokenKind::Sentinel);
    }
    let lexed = tokenize(text.as_bytes());
    match lexed.tokens() {
        [single] if single.text == text => single.clone(),
        _ => Token::new(text, TokenKind::Punctuator),
    }
}

/// Lexes lossily-decoded source into tokens. Never fails.
pub fn tokenize(source: &[u8]) -> TokenStream {
    let text = String::from_utf8_lossy(source);
    Lexer::new(&text).run()
}

struct Lexer<'a> {
    src: &'a str,
    chars: Vec<(usize, char)>,
    pos: usize,
    out: Vec<Token>,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            chars: src.char_indices().collect(),
            pos: 0,
            out: Vec::new(),
        }
    }

    fn peek(&self, ahead: usize) -> Option<char> {
        self.chars.get(self.pos + ahead).map(|&(_, c)| c)
    }

    fn offset(&self, idx: usize) -> usize {
        self.chars.get(idx).map_or(self.src.len(), |&(o, _)| o)
    }

    fn slice(&self, start: usize, end: usize) -> &'a str {
        &self.src[self.offset(start)..self.offset(end)]
    }

    fn emit(&mut self, start: usize, kind: TokenKind) {
        let text = self.slice(start, self.pos).to_string();
        self.out.push(Token { text, kind });
    }

    fn run(mut self) -> TokenStream {
        while let Some(c) = self.peek(0) {
            let start = self.pos;
            if c.is_whitespace() {
                self.pos += 1;
            } else if c == '/' && self.peek(1) == Some('/') {
                while self.peek(0).is_some_and(|c| c != '\n') {
                    self.pos += 1;
                }
            } else if c == '/' && self.peek(1) == Some('*') {
                self.pos += 2;
                while self.peek(0).is_some() && !(self.peek(0) == Some('*') && self.peek(1) == Some('/')) {
                    self.pos += 1;
                }
                self.pos = (self.pos + 2).min(self.chars.len());
            } else if is_ident_start(c) {
                while self.peek(0).is_some_and(is_ident_continue) {
                    self.pos += 1;
                }
                let word = self.slice(start, self.pos);
                let kind = if is_keyword(word) {
                    TokenKind::Keyword
                } else {
                    TokenKind::Identifier
                };
                self.emit(start, kind);
            } else if c.is_ascii_digit() || (c == '.' && self.peek(1).is_some_and(|d| d.is_ascii_digit())) {
                self.number();
                self.emit(start, TokenKind::Number);
            } else if c == '"' || c == '\'' {
                if self.quoted(c) {
                    self.emit(start, TokenKind::String);
                } else {
                    self.pos = start + 1;
                    self.emit(start, TokenKind::Punctuator);
                }
            } else if c == '`' {
                if self.quoted_multiline('`') {
                    self.emit(start, TokenKind::TemplateChunk);
                } else {
                    self.pos = start + 1;
                    self.emit(start, TokenKind::Punctuator);
                }
            } else if c == '/' && self.regex_allowed() && self.regex() {
                self.emit(start, TokenKind::Regex);
            } else {
                self.pos = start;
                self.punctuator();
                self.emit(start, TokenKind::Punctuator);
            }
        }
        TokenStream::new(self.out)
    }

    fn number(&mut self) {
        let radix_prefix = self.peek(0) == Some('0')
            && matches!(self.peek(1), Some('x' | 'X' | 'o' | 'O' | 'b' | 'B'));
        if radix_prefix {
            self.pos += 2;
            while self.peek(0).is_some_and(|c| c.is_ascii_hexdigit() || c == '_') {
                self.pos += 1;
            }
        } else {
            while self.peek(0).is_some_and(|c| c.is_ascii_digit() || c == '_') {
                self.pos += 1;
            }
            if self.peek(0) == Some('.') {
                self.pos += 1;
                while self.peek(0).is_some_and(|c| c.is_ascii_digit() || c == '_') {
                    self.pos += 1;
                }
            }
            if matches!(self.peek(0), Some('e' | 'E')) {
                let sign = usize::from(matches!(self.peek(1), Some('+' | '-')));
                if self.peek(1 + sign).is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1 + sign;
                    while self.peek(0).is_some_and(|c| c.is_ascii_digit()) {
                        self.pos += 1;
                    }
                }
            }
        }
        if self.peek(0) == Some('n') {
            self.pos += 1;
        }
    }

    /// Single-line quoted literal. Returns false (position unspecified) if
    /// unterminated.
    fn quoted(&mut self, quote: char) -> bool {
        self.pos += 1;
        while let Some(c) = self.peek(0) {
            match c {
                '\\' if self.peek(1).is_some_and(|n| n != '\n') => self.pos += 2,
                '\n' => return false,
                _ if c == quote => {
                    self.pos += 1;
                    return true;
                }
                _ => self.pos += 1,
            }
        }
        false
    }

    fn quoted_multiline(&mut self, quote: char) -> bool {
        self.pos += 1;
        while let Some(c) = self.peek(0) {
            if c == '\\' && self.peek(1).is_some() {
                self.pos += 2;
            } else if c == quote {
                self.pos += 1;
                return true;
            } else {
                self.pos += 1;
            }
        }
        false
    }

    fn regex_allowed(&self) -> bool {
        match self.out.last() {
            None => true,
            Some(t) => match t.kind {
                TokenKind::Punctuator => !matches!(t.text.as_str(), ")" | "]" | "}" | "++" | "--"),
                TokenKind::Keyword => !matches!(
                    t.text.as_str(),
                    "this" | "super" | "true" | "false" | "null"
                ),
                _ => false,
            },
        }
    }

    fn regex(&mut self) -> bool {
        let start = self.pos;
        self.pos += 1;
        let mut in_class = false;
        loop {
            match self.peek(0) {
                None | Some('\n') => {
                    self.pos = start;
                    return false;
                }
                Some('\\') if self.peek(1).is_some_and(|n| n != '\n') => self.pos += 2,
                Some('[') => {
                    in_class = true;
                    self.pos += 1;
                }
                Some(']') => {
                    in_class = false;
                    self.pos += 1;
                }
                Some('/') if !in_class => {
                    self.pos += 1;
                    break;
                }
                Some(_) => self.pos += 1,
            }
        }
        // An empty body would be a line comment, which was handled earlier.
        while self.peek(0).is_some_and(|c| c.is_ascii_alphabetic()) {
            self.pos += 1;
        }
        true
    }

    fn punctuator(&mut self) {
        let rest = &self.src[self.offset(self.pos)..];
        for p in PUNCTUATORS {
            if rest.starts_with(p) {
                self.pos += p.chars().count();
                return;
            }
        }
        self.pos += 1;
    }
}
