//! Line-oriented textual IR parser.
//!
//! ```text
//! struct %student { [8 x char] id, i32 score }
//! global @stu : %student
//! fn @f(%p: ptr(char), %n: u64) -> i32 library {
//! entry:
//!   %c = load char, %p
//!   ret 0
//! }
//! ```

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use super::module::{
    BinOp, Block, CmpPred, Function, Global, InstrId, InstrKind, Instruction, Module, Operand, Param,
};
use super::types::{AggregateDecl, AggregateKind, Field, Type};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseDiagnostic {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub diagnostics: Vec<ParseDiagnostic>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl ParseError {
    fn single(line: usize, col: usize, message: impl Into<String>) -> Self {
        ParseError { diagnostics: vec![ParseDiagnostic { line, col, message: message.into() }] }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Local(String),
    Global(String),
    /// Raw text of a token that starts with a digit or `-digit`.
    Number(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Colon,
    Eq,
    Arrow,
    Ellipsis,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) | Tok::Number(s) => write!(f, "`{s}`"),
            Tok::Local(s) => write!(f, "`%{s}`"),
            Tok::Global(s) => write!(f, "`@{s}`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBracket => f.write_str("`[`"),
            Tok::RBracket => f.write_str("`]`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Eq => f.write_str("`=`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::Ellipsis => f.write_str("`...`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == ';' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let take_name = |start: usize| {
            let mut j = start;
            while j < chars.len() && is_name_char(chars[j]) {
                j += 1;
            }
            (chars[start..j].iter().collect::<String>(), j)
        };
        let (tok, next) = match c {
            '{' => (Tok::LBrace, i + 1),
            '}' => (Tok::RBrace, i + 1),
            '(' => (Tok::LParen, i + 1),
            ')' => (Tok::RParen, i + 1),
            '[' => (Tok::LBracket, i + 1),
            ']' => (Tok::RBracket, i + 1),
            ',' => (Tok::Comma, i + 1),
            ':' => (Tok::Colon, i + 1),
            '=' => (Tok::Eq, i + 1),
            '-' if chars.get(i + 1) == Some(&'>') => (Tok::Arrow, i + 2),
            '-' if chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) => {
                let (s, j) = take_name(i + 1);
                (Tok::Number(format!("-{s}")), j)
            }
            '.' if chars.get(i + 1) == Some(&'.') && chars.get(i + 2) == Some(&'.') => {
                (Tok::Ellipsis, i + 3)
            }
            '%' | '@' => {
                let (s, j) = take_name(i + 1);
                if s.is_empty() {
                    return Err(ParseError::single(tl, tc, format!("expected a name after `{c}`")));
                }
                (if c == '%' { Tok::Local(s) } else { Tok::Global(s) }, j)
            }
            d if d.is_ascii_digit() => {
                let (s, j) = take_name(i);
                (Tok::Number(s), j)
            }
            a if a.is_ascii_alphabetic() || a == '_' => {
                let (s, j) = take_name(i);
                (Tok::Ident(s), j)
            }
            other => {
                return Err(ParseError::single(tl, tc, format!("unexpected character `{other}`")))
            }
        };
        col += next - i;
        i = next;
        out.push(Token { tok, line: tl, col: tc });
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

fn parse_int(raw: &str) -> Option<i64> {
    let (neg, body) = match raw.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, raw),
    };
    let mag: i128 = if let Some(h) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i128::from(u64::from_str_radix(h, 16).ok()?)
    } else {
        i128::from(body.parse::<u64>().ok()?)
    };
    let v = if neg { -mag } else { mag };
    // Unsigned 64-bit literals wrap into the i64 bit pattern.
    if v > i128::from(u64::MAX) || v < i128::from(i64::MIN) {
        None
    } else {
        Some(v as i64)
    }
}

/// Position of a name reference that is resolved after the whole file is read.
struct PendingType {
    line: usize,
    col: usize,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    /// Positions of `%Name` type references, for diagnostics during resolution.
    type_refs: Vec<(String, PendingType)>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> PResult<T> {
        let (l, c) = self.here();
        Err(ParseError::single(l, c, message))
    }

    fn expect(&mut self, want: Tok) -> PResult<()> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected {want}, found {}", self.peek()))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => self.err(format!("expected identifier, found {other}")),
        }
    }

    fn keyword(&mut self, kw: &str) -> PResult<()> {
        match self.peek() {
            Tok::Ident(s) if s == kw => {
                self.bump();
                Ok(())
            }
            other => self.err(format!("expected `{kw}`, found {other}")),
        }
    }

    fn local(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Local(s) => {
                self.bump();
                Ok(s)
            }
            other => self.err(format!("expected `%name`, found {other}")),
        }
    }

    fn global_name(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Global(s) => {
                self.bump();
                Ok(s)
            }
            other => self.err(format!("expected `@name`, found {other}")),
        }
    }

    fn number(&mut self) -> PResult<i64> {
        match self.peek().clone() {
            Tok::Number(s) => match parse_int(&s) {
                Some(v) => {
                    self.bump();
                    Ok(v)
                }
                None => self.err(format!("invalid integer literal `{s}`")),
            },
            other => self.err(format!("expected integer, found {other}")),
        }
    }

    fn ty(&mut self) -> PResult<Type> {
        let (line, col) = self.here();
        match self.peek().clone() {
            Tok::Local(name) => {
                self.bump();
                self.type_refs.push((name.clone(), PendingType { line, col }));
                Ok(Type::Struct(name))
            }
            Tok::LBracket => {
                self.bump();
                let n = self.number()?;
                if n < 1 {
                    return Err(ParseError::single(line, col, "array length must be at least 1"));
                }
                self.keyword("x")?;
                let elem = self.ty()?;
                self.expect(Tok::RBracket)?;
                Ok(Type::array(elem, n as u64))
            }
            Tok::Ident(word) => {
                self.bump();
                match word.as_str() {
                    "char" => Ok(Type::Char),
                    "void" => Ok(Type::Void),
                    "ptr" => {
                        self.expect(Tok::LParen)?;
                        let inner = self.ty()?;
                        self.expect(Tok::RParen)?;
                        Ok(Type::ptr(inner))
                    }
                    "fn" => {
                        self.expect(Tok::LParen)?;
                        let mut params = Vec::new();
                        if *self.peek() != Tok::RParen {
                            loop {
                                if *self.peek() == Tok::Ellipsis {
                                    return self.err("variadic functions are unsupported");
                                }
                                params.push(self.ty()?);
                                if *self.peek() != Tok::Comma {
                                    break;
                                }
                                self.bump();
                            }
                        }
                        self.expect(Tok::RParen)?;
                        self.expect(Tok::Arrow)?;
                        let ret = self.ty()?;
                        Ok(Type::Function(params, Box::new(ret)))
                    }
                    w => scalar_type(w).ok_or_else(|| {
                        ParseError::single(line, col, format!("unknown type name `{w}`"))
                    }),
                }
            }
            other => self.err(format!("expected type, found {other}")),
        }
    }

    fn operand(&mut self) -> PResult<Operand> {
        match self.peek().clone() {
            Tok::Local(s) => {
                self.bump();
                Ok(Operand::Local(s))
            }
            Tok::Global(s) => {
                self.bump();
                Ok(Operand::Global(s))
            }
            Tok::Number(_) => Ok(Operand::Const(self.number()?)),
            Tok::Ident(s) if s == "null" => {
                self.bump();
                Ok(Operand::Const(0))
            }
            other => self.err(format!("expected operand, found {other}")),
        }
    }

    fn aggregate(&mut self, kind: AggregateKind) -> PResult<AggregateDecl> {
        let name = self.local()?;
        self.expect(Tok::LBrace)?;
        let mut fields: Vec<Field> = Vec::new();
        while *self.peek() != Tok::RBrace {
            let ty = self.ty()?;
            let (l, c) = self.here();
            let fname = self.ident()?;
            if fields.iter().any(|f| f.name == fname) {
                return Err(ParseError::single(
                    l,
                    c,
                    format!("duplicate definition of field `{fname}` in `%{name}`"),
                ));
            }
            fields.push(Field { name: fname, ty });
            if *self.peek() == Tok::Comma {
                self.bump();
            } else {
                break;
            }
        }
        self.expect(Tok::RBrace)?;
        if fields.is_empty() {
            return self.err(format!("`%{name}` declares no fields"));
        }
        Ok(AggregateDecl { name, kind, fields })
    }

    fn global(&mut self) -> PResult<Global> {
        let name = self.global_name()?;
        self.expect(Tok::Colon)?;
        let ty = self.ty()?;
        let mut init = None;
        if *self.peek() == Tok::Eq {
            self.bump();
            self.keyword("bytes")?;
            self.expect(Tok::LParen)?;
            let mut bytes = Vec::new();
            while *self.peek() != Tok::RParen {
                let raw = match self.peek().clone() {
                    Tok::Number(s) | Tok::Ident(s) => s,
                    other => return self.err(format!("expected hex byte, found {other}")),
                };
                if raw.len() != 2 {
                    return self.err(format!("expected two hex digits, found `{raw}`"));
                }
                match u8::from_str_radix(&raw, 16) {
                    Ok(b) => bytes.push(b),
                    Err(_) => return self.err(format!("invalid hex byte `{raw}`")),
                }
                self.bump();
            }
            self.expect(Tok::RParen)?;
            init = Some(bytes);
        }
        Ok(Global { name, ty, init })
    }

    fn function(&mut self) -> PResult<Function> {
        let name = self.global_name()?;
        self.expect(Tok::LParen)?;
        let mut params: Vec<Param> = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                if *self.peek() == Tok::Ellipsis {
                    return self.err("variadic functions are unsupported");
                }
                let (l, c) = self.here();
                let pname = self.local()?;
                self.expect(Tok::Colon)?;
                let ty = self.ty()?;
                if ty.contains_function() {
                    return Err(ParseError::single(l, c, "function-pointer parameter unsupported"));
                }
                if params.iter().any(|p| p.name == pname) {
                    return Err(ParseError::single(
                        l,
                        c,
                        format!("duplicate definition of parameter `%{pname}`"),
                    ));
                }
                params.push(Param { name: pname, ty });
                if *self.peek() != Tok::Comma {
                    break;
                }
                self.bump();
            }
        }
        self.expect(Tok::RParen)?;
        self.expect(Tok::Arrow)?;
        let (rl, rc) = self.here();
        let ret = self.ty()?;
        if ret.contains_function() {
            return Err(ParseError::single(rl, rc, "function-pointer return type unsupported"));
        }
        let mut library = false;
        if matches!(self.peek(), Tok::Ident(s) if s == "library") {
            self.bump();
            library = true;
        }
        self.expect(Tok::LBrace)?;
        let mut blocks: Vec<Block> = Vec::new();
        let mut next_id = 0u32;
        while *self.peek() != Tok::RBrace {
            let (l, c) = self.here();
            let is_label = matches!(self.peek(), Tok::Ident(_)) && *self.peek_at(1) == Tok::Colon;
            if is_label {
                let label = self.ident()?;
                self.bump();
                if blocks.iter().any(|b| b.label == label) {
                    return Err(ParseError::single(
                        l,
                        c,
                        format!("duplicate definition of label `{label}`"),
                    ));
                }
                blocks.push(Block { label, instrs: Vec::new() });
                continue;
            }
            if *self.peek() == Tok::Eof {
                return self.err("unterminated function body");
            }
            let Some(block) = blocks.last_mut() else {
                return self.err("expected block label");
            };
            let kind = self.instr()?;
            block.instrs.push(Instruction { id: InstrId(next_id), kind });
            next_id += 1;
        }
        self.expect(Tok::RBrace)?;
        Ok(Function { name, params, ret, library, blocks })
    }

    fn instr(&mut self) -> PResult<InstrKind> {
        let line = self.toks[self.pos].line;
        if let Tok::Local(_) = self.peek() {
            let dest = self.local()?;
            self.expect(Tok::Eq)?;
            let (l, c) = self.here();
            let op = self.ident()?;
            return match op.as_str() {
                "alloca" => Ok(InstrKind::Alloca { dest, ty: self.ty()? }),
                "load" => {
                    let ty = self.ty()?;
                    self.expect(Tok::Comma)?;
                    Ok(InstrKind::Load { dest, ty, addr: self.operand()? })
                }
                "gep" => {
                    let base_ty = self.ty()?;
                    self.expect(Tok::Comma)?;
                    let base = self.operand()?;
                    let mut indices = Vec::new();
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        indices.push(self.operand()?);
                    }
                    Ok(InstrKind::Gep { dest, base_ty, base, indices })
                }
                "cmp" => {
                    let (pl, pc) = self.here();
                    let p = self.ident()?;
                    let pred = CmpPred::from_mnemonic(&p).ok_or_else(|| {
                        ParseError::single(pl, pc, format!("unknown comparison `{p}`"))
                    })?;
                    self.binop_tail(dest, BinOp::Cmp(pred))
                }
                "call" => {
                    let (callee, args) = self.call_tail()?;
                    Ok(InstrKind::Call { dest: Some(dest), callee, args })
                }
                other => match BinOp::from_mnemonic(other) {
                    Some(bop) => self.binop_tail(dest, bop),
                    None => Err(ParseError::single(l, c, format!("unknown opcode `{other}`"))),
                },
            };
        }
        let (l, c) = self.here();
        let op = self.ident()?;
        match op.as_str() {
            "store" => {
                let ty = self.ty()?;
                let value = self.operand()?;
                self.expect(Tok::Comma)?;
                Ok(InstrKind::Store { ty, value, addr: self.operand()? })
            }
            "call" => {
                let (callee, args) = self.call_tail()?;
                Ok(InstrKind::Call { dest: None, callee, args })
            }
            "br" => {
                let cond = self.operand()?;
                self.expect(Tok::Comma)?;
                let then_label = self.ident()?;
                self.expect(Tok::Comma)?;
                let else_label = self.ident()?;
                Ok(InstrKind::Br { cond, then_label, else_label })
            }
            "jmp" => Ok(InstrKind::Jmp { label: self.ident()? }),
            "ret" => {
                let same_line = self.toks[self.pos].line == line;
                let has_value = same_line
                    && match self.peek() {
                        Tok::Local(_) | Tok::Global(_) | Tok::Number(_) => true,
                        Tok::Ident(s) => s == "null",
                        _ => false,
                    };
                let value = if has_value { Some(self.operand()?) } else { None };
                Ok(InstrKind::Ret { value })
            }
            other => Err(ParseError::single(l, c, format!("unknown opcode `{other}`"))),
        }
    }

    fn binop_tail(&mut self, dest: String, op: BinOp) -> PResult<InstrKind> {
        let ty = self.ty()?;
        let lhs = self.operand()?;
        self.expect(Tok::Comma)?;
        let rhs = self.operand()?;
        Ok(InstrKind::BinOp { dest, op, ty, lhs, rhs })
    }

    fn call_tail(&mut self) -> PResult<(String, Vec<Operand>)> {
        let callee = self.global_name()?;
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                args.push(self.operand()?);
                if *self.peek() != Tok::Comma {
                    break;
                }
                self.bump();
            }
        }
        self.expect(Tok::RParen)?;
        Ok((callee, args))
    }
}

fn scalar_type(word: &str) -> Option<Type> {
    match word {
        "f32" => return Some(Type::Float { bits: 32 }),
        "f64" => return Some(Type::Float { bits: 64 }),
        _ => {}
    }
    let (signed, bits) = if let Some(b) = word.strip_prefix("uint") {
        (false, b)
    } else if let Some(b) = word.strip_prefix("int") {
        (true, b)
    } else if let Some(b) = word.strip_prefix('i') {
        (true, b)
    } else {
        (false, word.strip_prefix('u')?)
    };
    match bits {
        "8" | "16" | "32" | "64" => Some(Type::int(bits.parse().ok()?, signed)),
        _ => None,
    }
}

/// Parses a module. On failure returns every diagnostic found; syntax errors
/// stop at the first one.
pub fn parse_module(text: &str) -> Result<Module, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, type_refs: Vec::new() };
    let mut m = Module::default();
    let mut diags = Vec::new();
    let mut at_names: HashSet<String> = HashSet::new();
    loop {
        let (l, c) = p.here();
        match p.peek().clone() {
            Tok::Eof => break,
            Tok::Ident(kw) => {
                p.bump();
                match kw.as_str() {
                    "struct" | "union" => {
                        let kind = if kw == "struct" {
                            AggregateKind::Struct
                        } else {
                            AggregateKind::Union
                        };
                        let d = p.aggregate(kind)?;
                        if m.aggregates.iter().any(|a| a.name == d.name) {
                            diags.push(ParseDiagnostic {
                                line: l,
                                col: c,
                                message: format!("duplicate definition of `%{}`", d.name),
                            });
                        }
                        m.aggregates.push(d);
                    }
                    "global" => {
                        let g = p.global()?;
                        if g.ty.contains_function() {
                            diags.push(ParseDiagnostic {
                                line: l,
                                col: c,
                                message: "function-pointer global unsupported".into(),
                            });
                        }
                        if !at_names.insert(g.name.clone()) {
                            diags.push(ParseDiagnostic {
                                line: l,
                                col: c,
                                message: format!("duplicate definition of `@{}`", g.name),
                            });
                        }
                        m.globals.push(g);
                    }
                    "fn" => {
                        let f = p.function()?;
                        if !at_names.insert(f.name.clone()) {
                            diags.push(ParseDiagnostic {
                                line: l,
                                col: c,
                                message: format!("duplicate definition of `@{}`", f.name),
                            });
                        }
                        m.functions.push(f);
                    }
                    other => {
                        return Err(ParseError::single(
                            l,
                            c,
                            format!("expected `struct`, `union`, `global` or `fn`, found `{other}`"),
                        ))
                    }
                }
            }
            other => {
                return Err(ParseError::single(l, c, format!("expected declaration, found {other}")))
            }
        }
    }

    let kinds: HashMap<String, AggregateKind> =
        m.aggregates.iter().map(|a| (a.name.clone(), a.kind)).collect();
    for (name, pos) in &p.type_refs {
        if !kinds.contains_key(name) {
            diags.push(ParseDiagnostic {
                line: pos.line,
                col: pos.col,
                message: format!("unknown type name `%{name}`"),
            });
        }
    }
    for d in &m.aggregates {
        for f in &d.fields {
            if f.ty.contains_function() {
                diags.push(ParseDiagnostic {
                    line: 0,
                    col: 0,
                    message: format!("field `{}` of `%{}` has a function type", f.name, d.name),
                });
            }
        }
    }
    if !diags.is_empty() {
        return Err(ParseError { diagnostics: diags });
    }
    resolve_aggregates(&mut m, &kinds);
    Ok(m)
}

/// Rewrites `Struct(name)` placeholders to `Union(name)` where declared so.
fn resolve_aggregates(m: &mut Module, kinds: &HashMap<String, AggregateKind>) {
    let fix = |t: &mut Type| fix_type(t, kinds);
    for d in &mut m.aggregates {
        for f in &mut d.fields {
            fix(&mut f.ty);
        }
    }
    for g in &mut m.globals {
        fix(&mut g.ty);
    }
    for func in &mut m.functions {
        for p in &mut func.params {
            fix(&mut p.ty);
        }
        fix(&mut func.ret);
        for b in &mut func.blocks {
            for i in &mut b.instrs {
                match &mut i.kind {
                    InstrKind::Alloca { ty, .. }
                    | InstrKind::Load { ty, .. }
                    | InstrKind::Store { ty, .. }
                    | InstrKind::BinOp { ty, .. } => fix(ty),
                    InstrKind::Gep { base_ty, .. } => fix(base_ty),
                    _ => {}
                }
            }
        }
    }
}

fn fix_type(t: &mut Type, kinds: &HashMap<String, AggregateKind>) {
    match t {
        Type::Struct(n) if kinds.get(n) == Some(&AggregateKind::Union) => {
            *t = Type::Union(std::mem::take(n));
        }
        Type::Pointer(inner) | Type::Array(inner, _) => fix_type(inner, kinds),
        Type::Function(ps, r) => {
            for p in ps {
                fix_type(p, kinds);
            }
            fix_type(r, kinds);
        }
        _ => {}
    }
}

/// Parses a single type expression, resolving `%Name` against `aggregates`.
pub fn parse_type(text: &str, aggregates: &[AggregateDecl]) -> Result<Type, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, type_refs: Vec::new() };
    let mut t = p.ty()?;
    if *p.peek() != Tok::Eof {
        return p.err(format!("trailing input {}", p.peek()));
    }
    let kinds: HashMap<String, AggregateKind> =
        aggregates.iter().map(|a| (a.name.clone(), a.kind)).collect();
    for (name, pos) in &p.type_refs {
        if !kinds.contains_key(name) {
            return Err(ParseError::single(pos.line, pos.col, format!("unknown type name `%{name}`")));
        }
    }
    fix_type(&mut t, &kinds);
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_is_empty_module() {
        let m = parse_module("").unwrap();
        assert_eq!(m, Module::default());
        assert_eq!(parse_module("  ; only a comment\n").unwrap(), Module::default());
    }

    #[test]
    fn function_pointer_param_rejected() {
        let e = parse_module("fn @f(%p0: ptr(fn(int32)->int32)) -> void {\nentry:\n  ret\n}\n")
            .unwrap_err();
        assert_eq!(e.diagnostics.len(), 1);
        assert_eq!(e.diagnostics[0].message, "function-pointer parameter unsupported");
        assert_eq!((e.diagnostics[0].line, e.diagnostics[0].col), (1, 7));
    }

    #[test]
    fn variadic_rejected() {
        let e = parse_module("fn @printf(%f: ptr(char), ...) -> i32 {\nentry:\n  ret 0\n}")
            .unwrap_err();
        assert!(e.to_string().contains("variadic"));
    }

    #[test]
    fn unknown_type_and_duplicates() {
        let e = parse_module("global @g : %nope\n").unwrap_err();
        assert_eq!(e.diagnostics[0].message, "unknown type name `%nope`");
        let e = parse_module("global @g : i32\nglobal @g : i64\n").unwrap_err();
        assert!(e.diagnostics[0].message.contains("duplicate definition"));
        let e = parse_module("global @g : i32\nfn @g() -> void {\ne:\n ret\n}").unwrap_err();
        assert!(e.diagnostics[0].message.contains("duplicate definition"));
        let e = parse_module("global @g : i33\n").unwrap_err();
        assert_eq!(e.diagnostics[0].message, "unknown type name `i33`");
    }

    #[test]
    fn syntax_error_has_position() {
        let e = parse_module("fn @f() -> void {\nentry:\n  %x = frob i32 1, 2\n}").unwrap_err();
        let d = &e.diagnostics[0];
        assert_eq!((d.line, d.col), (3, 8));
        assert!(d.message.contains("frob"));
    }

    #[test]
    fn unions_are_resolved() {
        let m = parse_module("union %u { i32 a, char b }\nglobal @x : ptr(%u)\n").unwrap();
        assert_eq!(m.globals[0].ty, Type::ptr(Type::Union("u".into())));
    }

    #[test]
    fn ret_value_must_be_on_same_line() {
        let m = parse_module("fn @f() -> void {\na:\n  ret\nb:\n  ret\n}").unwrap();
        assert_eq!(m.functions[0].blocks.len(), 2);
        let m = parse_module("fn @f() -> i32 {\na:\n  ret -3\n}").unwrap();
        assert_eq!(
            m.functions[0].blocks[0].instrs[0].kind,
            InstrKind::Ret { value: Some(Operand::Const(-3)) }
        );
    }

    #[test]
    fn globals_with_bytes() {
        let m = parse_module("global @s : [4 x char] = bytes(61 0a ff 00)\n").unwrap();
        assert_eq!(m.globals[0].init.as_deref(), Some(&[0x61, 0x0a, 0xff, 0x00][..]));
        assert_eq!(m.to_string().trim_end(), "global @s : [4 x char] = bytes(61 0a ff 00)");
    }

    #[test]
    fn aliases_print_canonically() {
        let m = parse_module("global @a : int32\nglobal @b : uint8\n").unwrap();
        assert_eq!(m.globals[0].ty, Type::i32());
        assert_eq!(m.globals[1].ty.to_string(), "u8");
    }
}
