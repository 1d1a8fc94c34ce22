//! And-inverter graphs and the AIGER file formats.
//!
//! An [`Aig`] always uses the canonical variable numbering that the binary
//! format requires: inputs occupy variables `1..=I`, latches `I+1..=I+L` and
//! AND gates `I+L+1..=M` with `M = I + L + A`. ASCII files with a different
//! (but topologically ordered) numbering are renumbered on load.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use thiserror::Error;

/// A variable index paired with a negation bit: `2 * var + negated`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(transparent)]
pub struct Lit(pub u32);

impl Lit {
    pub const FALSE: Lit = Lit(0);
    pub const TRUE: Lit = Lit(1);

    pub fn new(var: u32, negated: bool) -> Lit {
        Lit(var * 2 + negated as u32)
    }

    pub fn var(self) -> u32 {
        self.0 >> 1
    }

    pub fn is_negated(self) -> bool {
        self.0 & 1 == 1
    }

    /// Strips the negation bit.
    pub fn positive(self) -> Lit {
        Lit(self.0 & !1)
    }

    pub fn is_const(self) -> bool {
        self.0 < 2
    }
}

impl std::ops::Not for Lit {
    type Output = Lit;

    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

impl std::ops::BitXor<bool> for Lit {
    type Output = Lit;

    fn bitxor(self, flip: bool) -> Lit {
        Lit(self.0 ^ flip as u32)
    }
}

impl fmt::Display for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Reset value of a latch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum LatchInit {
    #[default]
    Zero,
    One,
    /// Uninitialized; the latch may start in either state.
    Undef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Latch {
    pub next: Lit,
    pub init: LatchInit,
}

/// A two-input AND gate. Fanins are stored with `rhs0 >= rhs1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AndGate {
    pub rhs0: Lit,
    pub rhs1: Lit,
}

impl AndGate {
    pub fn new(a: Lit, b: Lit) -> AndGate {
        if a >= b {
            AndGate { rhs0: a, rhs1: b }
        } else {
            AndGate { rhs0: b, rhs1: a }
        }
    }

    pub fn fanins(&self) -> [Lit; 2] {
        [self.rhs0, self.rhs1]
    }
}

/// What a variable index refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Const,
    Input(usize),
    Latch(usize),
    And(usize),
}

#[derive(Debug, Error)]
pub enum AigerError {
    #[error("malformed header: {0}")]
    Header(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: literal {lit} out of range (max variable {max_var})")]
    LiteralOutOfRange { line: usize, lit: u32, max_var: u32 },
    #[error("line {line}: variable {var} defined twice")]
    DuplicateDefinition { line: usize, var: u32 },
    #[error("line {line}: AND gate {lhs} is not in topological order (fanin {rhs})")]
    NonTopological { line: usize, lhs: u32, rhs: u32 },
    #[error("truncated binary AND section at gate {0}")]
    TruncatedDelta(usize),
    #[error("invalid delta encoding at gate {0}")]
    BadDelta(usize),
    #[error("non-monotone variable numbering: M = {m}, but I + L + A = {sum}")]
    NonMonotone { m: u32, sum: u32 },
    #[error("unsupported AIGER extension: {0}")]
    Unsupported(String),
    #[error("invalid circuit: {0}")]
    Invalid(String),
    #[error("expected {expected} {what}, got {got}")]
    LengthMismatch { what: &'static str, expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AigerError>;

/// Immutable and-inverter graph in canonical numbering.
#[derive(Debug, Clone, Default)]
pub struct Aig {
    num_inputs: u32,
    latches: Vec<Latch>,
    ands: Vec<AndGate>,
    outputs: Vec<Lit>,
    symbols: Vec<String>,
    comments: Vec<String>,
}

/// Structural equality; symbols and comments are ignored.
impl PartialEq for Aig {
    fn eq(&self, other: &Self) -> bool {
        self.num_inputs == other.num_inputs && self.latches == other.latches && self.ands == other.ands && self.outputs == other.outputs
    }
}

impl Eq for Aig {}

impl Aig {
    /// Builds a circuit from canonical parts, checking every invariant.
    pub fn new(num_inputs: u32, latches: Vec<Latch>, ands: Vec<AndGate>, outputs: Vec<Lit>) -> Result<Aig> {
        let aig = Aig {
            num_inputs,
            latches,
            ands: ands.into_iter().map(|g| AndGate::new(g.rhs0, g.rhs1)).collect(),
            outputs,
            symbols: Vec::new(),
            comments: Vec::new(),
        };
        aig.validate()?;
        Ok(aig)
    }

    fn validate(&self) -> Result<()> {
        let max_var = self.max_var();
        let check = |lit: Lit, what: &str| {
            if lit.var() > max_var {
                Err(AigerError::Invalid(format!("{what} literal {lit} exceeds max variable {max_var}")))
            } else {
                Ok(())
            }
        };
        for (i, gate) in self.ands.iter().enumerate() {
            let lhs = self.and_var(i);
            for rhs in gate.fanins() {
                if rhs.var() >= lhs {
                    return Err(AigerError::Invalid(format!("AND {} has fanin {} that is not topologically earlier", lhs * 2, rhs)));
                }
            }
        }
        for l in &self.latches {
            check(l.next, "next-state")?;
        }
        for &o in &self.outputs {
            check(o, "output")?;
        }
        Ok(())
    }

    pub fn with_comments(mut self, comments: Vec<String>) -> Aig {
        self.comments = comments;
        self
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs as usize
    }

    pub fn num_latches(&self) -> usize {
        self.latches.len()
    }

    pub fn num_ands(&self) -> usize {
        self.ands.len()
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    /// `M` in the header.
    pub fn max_var(&self) -> u32 {
        self.num_inputs + self.latches.len() as u32 + self.ands.len() as u32
    }

    pub fn latches(&self) -> &[Latch] {
        &self.latches
    }

    pub fn ands(&self) -> &[AndGate] {
        &self.ands
    }

    pub fn outputs(&self) -> &[Lit] {
        &self.outputs
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn comments(&self) -> &[String] {
        &self.comments
    }

    pub fn input_var(&self, i: usize) -> u32 {
        1 + i as u32
    }

    pub fn latch_var(&self, i: usize) -> u32 {
        1 + self.num_inputs + i as u32
    }

    pub fn and_var(&self, i: usize) -> u32 {
        1 + self.num_inputs + self.latches.len() as u32 + i as u32
    }

    pub fn kind(&self, var: u32) -> VarKind {
        let first_latch = 1 + self.num_inputs;
        let first_and = first_latch + self.latches.len() as u32;
        if var == 0 {
            VarKind::Const
        } else if var < first_latch {
            VarKind::Input((var - 1) as usize)
        } else if var < first_and {
            VarKind::Latch((var - first_latch) as usize)
        } else {
            VarKind::And((var - first_and) as usize)
        }
    }

    /// The AND gate defining `var`, if any.
    pub fn and_gate(&self, var: u32) -> Option<&AndGate> {
        match self.kind(var) {
            VarKind::And(i) => self.ands.get(i),
            _ => None,
        }
    }

    /// Reset state with `X` latches resolved to `undef_as`.
    pub fn initial_state(&self, undef_as: bool) -> Vec<bool> {
        self.latches
            .iter()
            .map(|l| match l.init {
                LatchInit::Zero => false,
                LatchInit::One => true,
                LatchInit::Undef => undef_as,
            })
            .collect()
    }

    /// Two-valued evaluation of one clock cycle.
    pub fn simulate(&self, inputs: &[bool], state: &[bool]) -> Result<(Vec<bool>, Vec<bool>)> {
        if inputs.len() != self.num_inputs() {
            return Err(AigerError::LengthMismatch { what: "input bits", expected: self.num_inputs(), got: inputs.len() });
        }
        if state.len() != self.num_latches() {
            return Err(AigerError::LengthMismatch { what: "latch bits", expected: self.num_latches(), got: state.len() });
        }
        let mut values = Vec::with_capacity(self.max_var() as usize + 1);
        values.push(false);
        values.extend_from_slice(inputs);
        values.extend_from_slice(state);
        let eval = |values: &[bool], lit: Lit| values[lit.var() as usize] ^ lit.is_negated();
        for gate in &self.ands {
            let v = eval(&values, gate.rhs0) && eval(&values, gate.rhs1);
            values.push(v);
        }
        let outputs = self.outputs.iter().map(|&o| eval(&values, o)).collect();
        let next = self.latches.iter().map(|l| eval(&values, l.next)).collect();
        Ok((outputs, next))
    }

    /// Serializes in ASCII (`aag`) format.
    pub fn write_ascii(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_header(&mut out, "aag");
        for i in 0..self.num_inputs() {
            writeln!(out, "{}", self.input_var(i) * 2).unwrap();
        }
        for (i, latch) in self.latches.iter().enumerate() {
            let cur = self.latch_var(i) * 2;
            match latch.init {
                LatchInit::Zero => writeln!(out, "{} {}", cur, latch.next),
                LatchInit::One => writeln!(out, "{} {} 1", cur, latch.next),
                LatchInit::Undef => writeln!(out, "{} {} {}", cur, latch.next, cur),
            }
            .unwrap();
        }
        for o in &self.outputs {
            writeln!(out, "{o}").unwrap();
        }
        for (i, gate) in self.ands.iter().enumerate() {
            writeln!(out, "{} {} {}", self.and_var(i) * 2, gate.rhs0, gate.rhs1).unwrap();
        }
        self.write_trailer(&mut out);
        out
    }

    /// Serializes in binary (`aig`) format.
    pub fn write_binary(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_header(&mut out, "aig");
        for (i, latch) in self.latches.iter().enumerate() {
            match latch.init {
                LatchInit::Zero => writeln!(out, "{}", latch.next),
                LatchInit::One => writeln!(out, "{} 1", latch.next),
                LatchInit::Undef => writeln!(out, "{} {}", latch.next, self.latch_var(i) * 2),
            }
            .unwrap();
        }
        for o in &self.outputs {
            writeln!(out, "{o}").unwrap();
        }
        for (i, gate) in self.ands.iter().enumerate() {
            let lhs = self.and_var(i) * 2;
            write_varint(&mut out, lhs - gate.rhs0.0);
            write_varint(&mut out, gate.rhs0.0 - gate.rhs1.0);
        }
        self.write_trailer(&mut out);
        out
    }

    fn write_header(&self, out: &mut Vec<u8>, magic: &str) {
        writeln!(out, "{} {} {} {} {} {}", magic, self.max_var(), self.num_inputs, self.latches.len(), self.outputs.len(), self.ands.len())
            .unwrap();
    }

    fn write_trailer(&self, out: &mut Vec<u8>) {
        for s in &self.symbols {
            writeln!(out, "{s}").unwrap();
        }
        if !self.comments.is_empty() {
            out.extend_from_slice(b"c\n");
            for c in &self.comments {
                writeln!(out, "{c}").unwrap();
            }
        }
    }
}

fn write_varint(out: &mut Vec<u8>, mut x: u32) {
    while x & !0x7f != 0 {
        out.push((x & 0x7f) as u8 | 0x80);
        x >>= 7;
    }
    out.push(x as u8);
}

/// Parses either format, dispatching on the magic.
pub fn parse(bytes: &[u8]) -> Result<Aig> {
    if bytes.starts_with(b"aag") {
        parse_ascii(bytes)
    } else if bytes.starts_with(b"aig") {
        parse_binary(bytes)
    } else {
        Err(AigerError::Header("expected `aag` or `aig` magic".into()))
    }
}

pub fn read_file(path: impl AsRef<std::path::Path>) -> Result<Aig> {
    parse(&std::fs::read(path)?)
}

#[derive(Debug, Clone, Copy)]
struct Header {
    m: u32,
    i: u32,
    l: u32,
    o: u32,
    a: u32,
    b: u32,
    c: u32,
}

fn parse_header(line: &str, magic: &str) -> Result<Header> {
    let mut parts = line.split_ascii_whitespace();
    if parts.next() != Some(magic) {
        return Err(AigerError::Header(format!("expected `{magic}` magic in `{line}`")));
    }
    let nums: Vec<u32> = parts.map(|p| p.parse().map_err(|_| AigerError::Header(format!("bad number `{p}`")))).collect::<Result<_>>()?;
    if nums.len() < 5 || nums.len() > 9 {
        return Err(AigerError::Header(format!("expected 5 to 9 counts, got {}", nums.len())));
    }
    let get = |i: usize| nums.get(i).copied().unwrap_or(0);
    if get(7) != 0 || get(8) != 0 {
        return Err(AigerError::Unsupported("justice/fairness sections".into()));
    }
    let h = Header { m: nums[0], i: nums[1], l: nums[2], o: nums[3], a: nums[4], b: get(5), c: get(6) };
    let sum = h.i as u64 + h.l as u64 + h.a as u64;
    if (h.m as u64) < sum {
        return Err(AigerError::Header(format!("M = {} is smaller than I + L + A = {}", h.m, sum)));
    }
    Ok(h)
}

/// Line-oriented cursor over the text part of a file.
struct Lines<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Lines { bytes, pos: 0, line: 0 }
    }

    fn next_line(&mut self) -> Option<&'a str> {
        if self.pos >= self.bytes.len() {
            return None;
        }
        let rest = &self.bytes[self.pos..];
        let end = rest.iter().position(|&b| b == b'\n').unwrap_or(rest.len());
        self.pos += (end + 1).min(rest.len());
        self.line += 1;
        let s = std::str::from_utf8(&rest[..end]).unwrap_or("");
        Some(s.trim_end_matches('\r'))
    }

    fn expect_line(&mut self, what: &str) -> Result<&'a str> {
        let line = self.line + 1;
        self.next_line().ok_or_else(|| AigerError::Parse { line, msg: format!("unexpected end of file, expected {what}") })
    }

    fn numbers(&mut self, what: &str, min: usize, max: usize) -> Result<(usize, Vec<u32>)> {
        let text = self.expect_line(what)?;
        let line = self.line;
        let nums: Vec<u32> = text
            .split_ascii_whitespace()
            .map(|t| t.parse().map_err(|_| AigerError::Parse { line, msg: format!("bad number `{t}` in {what}") }))
            .collect::<Result<_>>()?;
        if nums.len() < min || nums.len() > max {
            return Err(AigerError::Parse { line, msg: format!("{what}: expected {min}..={max} numbers, got {}", nums.len()) });
        }
        Ok((line, nums))
    }
}

/// Reads the symbol table and comment section that follow the gates.
fn parse_trailer(lines: &mut Lines<'_>, bad: Vec<String>) -> (Vec<String>, Vec<String>) {
    let mut symbols = Vec::new();
    let mut comments = bad;
    while let Some(l) = lines.next_line() {
        if l == "c" {
            while let Some(c) = lines.next_line() {
                comments.push(c.to_string());
            }
            break;
        }
        if !l.is_empty() {
            symbols.push(l.to_string());
        }
    }
    (symbols, comments)
}

fn parse_init(line: usize, raw: Option<u32>, cur_lit: u32) -> Result<LatchInit> {
    match raw {
        None | Some(0) => Ok(LatchInit::Zero),
        Some(1) => Ok(LatchInit::One),
        Some(x) if x == cur_lit => Ok(LatchInit::Undef),
        Some(x) => Err(AigerError::Parse { line, msg: format!("invalid latch reset value {x}") }),
    }
}

/// Bad-state and constraint literals are kept verbatim as comment lines.
fn read_raw_properties(lines: &mut Lines<'_>, h: &Header) -> Result<Vec<String>> {
    let mut raw = Vec::new();
    for (count, tag) in [(h.b, "bad"), (h.c, "constraint")] {
        for _ in 0..count {
            let (_, nums) = lines.numbers(tag, 1, 1)?;
            raw.push(format!("{tag} {}", nums[0]));
        }
    }
    Ok(raw)
}

pub fn parse_ascii(bytes: &[u8]) -> Result<Aig> {
    let mut lines = Lines::new(bytes);
    let header_line = lines.next_line().ok_or_else(|| AigerError::Header("empty input".into()))?;
    let h = parse_header(header_line, "aag")?;

    // Original variable -> line of definition.
    let mut defs: HashMap<u32, usize> = HashMap::new();
    let mut define = |var: u32, line: usize| -> Result<()> {
        if var == 0 {
            return Err(AigerError::Parse { line, msg: "cannot redefine the constant".into() });
        }
        if var > h.m {
            return Err(AigerError::LiteralOutOfRange { line, lit: var * 2, max_var: h.m });
        }
        if defs.insert(var, line).is_some() {
            return Err(AigerError::DuplicateDefinition { line, var });
        }
        Ok(())
    };
    let in_range = |line: usize, lit: u32| {
        if lit / 2 > h.m {
            Err(AigerError::LiteralOutOfRange { line, lit, max_var: h.m })
        } else {
            Ok(Lit(lit))
        }
    };
    let definition_lit = |line: usize, lit: u32, what: &str| {
        if lit & 1 == 1 || lit < 2 {
            Err(AigerError::Parse { line, msg: format!("{what} literal {lit} must be positive and non-constant") })
        } else {
            Ok(lit / 2)
        }
    };

    let mut input_vars = Vec::with_capacity(h.i as usize);
    for _ in 0..h.i {
        let (line, nums) = lines.numbers("input", 1, 1)?;
        let var = definition_lit(line, nums[0], "input")?;
        define(var, line)?;
        input_vars.push(var);
    }
    let mut latch_raw = Vec::with_capacity(h.l as usize);
    for _ in 0..h.l {
        let (line, nums) = lines.numbers("latch", 2, 3)?;
        let var = definition_lit(line, nums[0], "latch")?;
        define(var, line)?;
        let next = in_range(line, nums[1])?;
        let init = parse_init(line, nums.get(2).copied(), nums[0])?;
        latch_raw.push((var, next, init, line));
    }
    let mut output_raw = Vec::with_capacity(h.o as usize);
    for _ in 0..h.o {
        let (line, nums) = lines.numbers("output", 1, 1)?;
        output_raw.push((in_range(line, nums[0])?, line));
    }
    let raw_props = read_raw_properties(&mut lines, &h)?;
    let mut and_raw = Vec::with_capacity(h.a as usize);
    for _ in 0..h.a {
        let (line, nums) = lines.numbers("AND gate", 3, 3)?;
        let var = definition_lit(line, nums[0], "AND")?;
        define(var, line)?;
        let r0 = in_range(line, nums[1])?;
        let r1 = in_range(line, nums[2])?;
        for r in [r0, r1] {
            if r.var() >= var {
                return Err(AigerError::NonTopological { line, lhs: nums[0], rhs: r.0 });
            }
        }
        and_raw.push((var, r0, r1, line));
    }

    // Canonical renumbering: inputs and latches in file order, ANDs by
    // original index (which is topological since lhs > rhs).
    let mut and_order: Vec<usize> = (0..and_raw.len()).collect();
    and_order.sort_by_key(|&k| and_raw[k].0);
    let mut remap: HashMap<u32, u32> = HashMap::with_capacity(defs.len() + 1);
    remap.insert(0, 0);
    let mut next_var = 1u32;
    for &v in &input_vars {
        remap.insert(v, next_var);
        next_var += 1;
    }
    for &(v, ..) in &latch_raw {
        remap.insert(v, next_var);
        next_var += 1;
    }
    for &k in &and_order {
        remap.insert(and_raw[k].0, next_var);
        next_var += 1;
    }
    let map_lit = |lit: Lit, line: usize| -> Result<Lit> {
        remap
            .get(&lit.var())
            .map(|&v| Lit::new(v, lit.is_negated()))
            .ok_or_else(|| AigerError::Parse { line, msg: format!("literal {lit} refers to an undefined variable") })
    };

    let latches =
        latch_raw.iter().map(|&(_, next, init, line)| Ok(Latch { next: map_lit(next, line)?, init })).collect::<Result<Vec<_>>>()?;
    let outputs = output_raw.iter().map(|&(o, line)| map_lit(o, line)).collect::<Result<Vec<_>>>()?;
    let ands = and_order
        .iter()
        .map(|&k| {
            let (_, r0, r1, line) = and_raw[k];
            Ok(AndGate::new(map_lit(r0, line)?, map_lit(r1, line)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let (symbols, comments) = parse_trailer(&mut lines, raw_props);
    let mut aig = Aig::new(h.i, latches, ands, outputs)?;
    aig.symbols = symbols;
    aig.comments = comments;
    Ok(aig)
}

pub fn parse_binary(bytes: &[u8]) -> Result<Aig> {
    let mut lines = Lines::new(bytes);
    let header_line = lines.next_line().ok_or_else(|| AigerError::Header("empty input".into()))?;
    let h = parse_header(header_line, "aig")?;
    let sum = h.i + h.l + h.a;
    if h.m != sum {
        return Err(AigerError::NonMonotone { m: h.m, sum });
    }
    let check = |line: usize, lit: u32| {
        if lit / 2 > h.m {
            Err(AigerError::LiteralOutOfRange { line, lit, max_var: h.m })
        } else {
            Ok(Lit(lit))
        }
    };
    let mut latches = Vec::with_capacity(h.l as usize);
    for k in 0..h.l {
        let (line, nums) = lines.numbers("latch", 1, 2)?;
        let cur = (h.i + 1 + k) * 2;
        latches.push(Latch { next: check(line, nums[0])?, init: parse_init(line, nums.get(1).copied(), cur)? });
    }
    let mut outputs = Vec::with_capacity(h.o as usize);
    for _ in 0..h.o {
        let (line, nums) = lines.numbers("output", 1, 1)?;
        outputs.push(check(line, nums[0])?);
    }
    let raw_props = read_raw_properties(&mut lines, &h)?;

    let mut pos = lines.pos;
    let mut read_varint = |gate: usize| -> Result<u32> {
        let mut x: u64 = 0;
        let mut shift = 0;
        loop {
            let &b = bytes.get(pos).ok_or(AigerError::TruncatedDelta(gate))?;
            pos += 1;
            x |= ((b & 0x7f) as u64) << shift;
            if b & 0x80 == 0 {
                break;
            }
            shift += 7;
            if shift > 35 {
                return Err(AigerError::BadDelta(gate));
            }
        }
        u32::try_from(x).map_err(|_| AigerError::BadDelta(gate))
    };
    let mut ands = Vec::with_capacity(h.a as usize);
    for k in 0..h.a as usize {
        let lhs = (h.i + h.l + 1 + k as u32) * 2;
        let d0 = read_varint(k)?;
        let d1 = read_varint(k)?;
        if d0 == 0 || d0 > lhs || d1 > lhs - d0 {
            return Err(AigerError::BadDelta(k));
        }
        let r0 = lhs - d0;
        ands.push(AndGate { rhs0: Lit(r0), rhs1: Lit(r0 - d1) });
    }
    lines.pos = pos;
    let (symbols, comments) = parse_trailer(&mut lines, raw_props);
    let mut aig = Aig::new(h.i, latches, ands, outputs)?;
    aig.symbols = symbols;
    aig.comments = comments;
    Ok(aig)
}

/// Incremental construction in canonical numbering.
///
/// Inputs and latches are declared up front so AND variables can be handed
/// out immediately.
#[derive(Debug, Clone)]
pub struct AigBuilder {
    num_inputs: u32,
    latches: Vec<Latch>,
    ands: Vec<AndGate>,
    outputs: Vec<Lit>,
}

impl AigBuilder {
    pub fn new(num_inputs: usize, num_latches: usize) -> AigBuilder {
        AigBuilder {
            num_inputs: num_inputs as u32,
            latches: vec![Latch { next: Lit::FALSE, init: LatchInit::Zero }; num_latches],
            ands: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&self, i: usize) -> Lit {
        assert!(i < self.num_inputs as usize, "input {i} out of range");
        Lit::new(1 + i as u32, false)
    }

    pub fn latch(&self, i: usize) -> Lit {
        assert!(i < self.latches.len(), "latch {i} out of range");
        Lit::new(1 + self.num_inputs + i as u32, false)
    }

    pub fn and(&mut self, a: Lit, b: Lit) -> Lit {
        let var = 1 + self.num_inputs + self.latches.len() as u32 + self.ands.len() as u32;
        assert!(a.var() < var && b.var() < var, "fanin refers to an undefined gate");
        self.ands.push(AndGate::new(a, b));
        Lit::new(var, false)
    }

    pub fn or(&mut self, a: Lit, b: Lit) -> Lit {
        !self.and(!a, !b)
    }

    pub fn xor(&mut self, a: Lit, b: Lit) -> Lit {
        let p = self.and(a, !b);
        let q = self.and(!a, b);
        self.or(p, q)
    }

    /// `sel ? then_lit : else_lit`.
    pub fn mux(&mut self, sel: Lit, then_lit: Lit, else_lit: Lit) -> Lit {
        let p = self.and(sel, then_lit);
        let q = self.and(!sel, else_lit);
        self.or(p, q)
    }

    pub fn set_latch(&mut self, i: usize, next: Lit, init: LatchInit) {
        self.latches[i] = Latch { next, init };
    }

    pub fn output(&mut self, lit: Lit) {
        self.outputs.push(lit);
    }

    pub fn num_ands(&self) -> usize {
        self.ands.len()
    }

    pub fn build(self) -> Result<Aig> {
        Aig::new(self.num_inputs, self.latches, self.ands, self.outputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const AND2: &str = "aag 3 2 0 1 1\n2\n4\n6\n6 2 4\n";

    #[test]
    fn empty_circuit_with_constant_output() {
        let aig = parse_ascii(b"aag 0 0 0 1 0\n0\n").unwrap();
        assert_eq!(aig.num_outputs(), 1);
        assert_eq!(aig.outputs()[0], Lit::FALSE);
        assert_eq!(aig.max_var(), 0);
    }

    #[test]
    fn two_input_and() {
        let aig = parse_ascii(AND2.as_bytes()).unwrap();
        assert_eq!(aig.num_inputs(), 2);
        assert_eq!(aig.num_ands(), 1);
        assert_eq!(aig.outputs(), &[Lit(6)]);
        assert_eq!(aig.ands()[0], AndGate::new(Lit(2), Lit(4)));
        assert_eq!(aig.simulate(&[true, true], &[]).unwrap().0, vec![true]);
        assert_eq!(aig.simulate(&[true, false], &[]).unwrap().0, vec![false]);
    }

    #[test]
    fn five_gate_file_matches_line_count() {
        let text = "aag 8 3 0 2 5\n2\n4\n6\n16\n13\n8 2 4\n10 8 7\n12 10 3\n14 11 5\n16 14 12\nc\nhand written\n";
        // Oracle: count lines between the header and the comment marker,
        // minus the input and output sections.
        let body: Vec<&str> = text.lines().skip(1).take_while(|l| *l != "c").collect();
        let gate_lines = body.iter().filter(|l| l.split_whitespace().count() == 3).count();
        let aig = parse_ascii(text.as_bytes()).unwrap();
        assert_eq!(aig.num_ands(), gate_lines);
        assert_eq!(aig.num_ands(), 5);
        assert_eq!(aig.comments(), &["hand written".to_string()]);
    }

    #[test]
    fn empty_write() {
        let aig = Aig::default();
        assert_eq!(aig.write_ascii(), b"aag 0 0 0 0 0\n");
        assert_eq!(parse_binary(b"aig 0 0 0 0 0\n").unwrap(), aig);
    }

    #[test]
    fn and_roundtrip_is_byte_identical() {
        let aig = parse_ascii(AND2.as_bytes()).unwrap();
        // Writers emit the larger fanin first.
        let canonical = "aag 3 2 0 1 1\n2\n4\n6\n6 4 2\n";
        assert_eq!(aig.write_ascii(), canonical.as_bytes());
        assert_eq!(parse_ascii(canonical.as_bytes()).unwrap(), aig);
        let bin = aig.write_binary();
        assert_eq!(&bin[..], b"aig 3 2 0 1 1\n6\n\x02\x02");
        assert_eq!(parse_binary(&bin).unwrap(), aig);
    }

    #[test]
    fn noncanonical_ascii_is_renumbered() {
        // inputs 4 and 2 swapped, latch declared with X reset.
        let text = "aag 5 2 1 1 2\n4\n2\n6 10 6\n10\n10 8 6\n8 4 3\n";
        let aig = parse_ascii(text.as_bytes()).unwrap();
        assert_eq!(aig.latches()[0].init, LatchInit::Undef);
        // original 4 -> 2, 2 -> 4, 6 -> 6, 8 -> 8, 10 -> 10
        assert_eq!(aig.ands()[0], AndGate::new(Lit(2), Lit(5)));
        assert_eq!(aig.ands()[1], AndGate::new(Lit(8), Lit(6)));
        assert_eq!(parse_ascii(&aig.write_ascii()).unwrap(), aig);
    }

    #[test]
    fn errors_report_line_numbers() {
        let err = parse_ascii(b"aag 3 2 0 1 1\n2\n4\n6\n6 8 4\n").unwrap_err();
        assert!(matches!(err, AigerError::LiteralOutOfRange { line: 5, .. }), "{err}");
        let err = parse_ascii(b"aag 3 2 0 1 1\n2\n2\n6\n6 2 4\n").unwrap_err();
        assert!(matches!(err, AigerError::DuplicateDefinition { line: 3, var: 1 }), "{err}");
        let err = parse_ascii(b"aag 4 2 0 1 2\n2\n4\n6\n6 8 4\n8 2 4\n").unwrap_err();
        assert!(matches!(err, AigerError::NonTopological { line: 5, .. }), "{err}");
        assert!(matches!(parse_ascii(b"aig 0 0 0 0 0\n"), Err(AigerError::Header(_))));
        assert!(matches!(parse_ascii(b"aag 1 2 0 0 0\n"), Err(AigerError::Header(_))));
        let err = parse_ascii(b"aag 3 2 0 1 1\n2\n4\n7\n").unwrap_err();
        assert!(matches!(err, AigerError::Parse { line: 5, .. }), "{err}");
    }

    #[test]
    fn undefined_reference_rejected() {
        let err = parse_ascii(b"aag 4 1 0 1 1\n2\n8\n8 2 6\n").unwrap_err();
        assert!(matches!(err, AigerError::Parse { line: 4, .. }), "{err}");
    }

    #[test]
    fn binary_errors() {
        assert!(matches!(parse_binary(b"aig 3 2 0 1 1\n6\n\x02"), Err(AigerError::TruncatedDelta(0))));
        assert!(matches!(parse_binary(b"aig 4 2 0 1 1\n6\n\x02\x02"), Err(AigerError::NonMonotone { .. })));
        assert!(matches!(parse_binary(b"aig 3 2 0 1 1\n6\n\x00\x02"), Err(AigerError::BadDelta(0))));
    }

    #[test]
    fn bad_states_kept_as_comments() {
        let text = "aag 3 2 0 0 1 1\n2\n4\n6\n6 2 4\nc\nnote\n";
        let aig = parse_ascii(text.as_bytes()).unwrap();
        assert_eq!(aig.num_outputs(), 0);
        assert_eq!(aig.comments(), &["bad 6".to_string(), "note".to_string()]);
        assert!(matches!(parse_ascii(b"aag 0 0 0 0 0 0 0 1 0\n"), Err(AigerError::Unsupported(_))));
    }

    #[test]
    fn latch_inits_roundtrip_in_binary() {
        let mut b = AigBuilder::new(1, 3);
        let x = b.and(b.input(0), b.latch(1));
        b.set_latch(0, x, LatchInit::Zero);
        b.set_latch(1, !b.latch(0), LatchInit::One);
        b.set_latch(2, b.latch(2), LatchInit::Undef);
        b.output(x);
        let aig = b.build().unwrap();
        assert_eq!(parse_binary(&aig.write_binary()).unwrap(), aig);
        assert_eq!(parse_ascii(&aig.write_ascii()).unwrap(), aig);
    }

    #[test]
    fn simulate_length_mismatch() {
        let aig = parse_ascii(AND2.as_bytes()).unwrap();
        assert!(matches!(aig.simulate(&[true], &[]), Err(AigerError::LengthMismatch { .. })));
    }

    #[test]
    fn varint_multi_byte() {
        let mut out = Vec::new();
        write_varint(&mut out, 16387);
        assert_eq!(out, vec![0x83, 0x80, 0x01]);
    }
}
