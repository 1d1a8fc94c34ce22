//! The boolean PDR parameter space and its constraint rules.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub const NUM_FLAGS: usize = 9;

/// Command-line letter of each flag, in bit-vector order.
pub const FLAG_LETTERS: [char; NUM_FLAGS] = ['g', 'r', 'n', 'c', 'y', 'f', 'i', 't', 'k'];

/// Size of the rule-filtered configuration space.
pub const NUM_VALID_CONFIGS: usize = 114;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    /// `-g` turns off generalization, so `-r -n -c -y -f` must be off too.
    SkipGeneralIsMaster = 1,
    /// `-f` orders by the priorities that `-y` computes.
    FlopOrderNeedsPrio = 2,
    /// `-c` only acts inside the down phase, which `-n` skips.
    CtgsNeedsDown = 3,
    /// `-k` modifies the abstraction refinement enabled by `-t`.
    SimpleRefineNeedsAbs = 4,
}

impl Rule {
    pub fn id(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rule{}", self.id())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParamError {
    #[error("unknown flag `{0}`")]
    UnknownFlag(String),
    #[error("duplicate flag `-{0}`")]
    DuplicateFlag(char),
    #[error("configuration `{config}` violates {rules:?}")]
    Invalid { config: String, rules: Vec<Rule> },
    #[error("malformed bit-vector `{0}`")]
    BadBits(String),
}

/// One assignment of the nine PDR heuristics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PdrConfig {
    /// `-g`
    pub skip_general: bool,
    /// `-r`
    pub two_rounds: bool,
    /// `-n`
    pub skip_down: bool,
    /// `-c`
    pub ctgs: bool,
    /// `-y`
    pub flop_prio: bool,
    /// `-f`
    pub flop_order: bool,
    /// `-i`
    pub eager_push: bool,
    /// `-t`
    pub use_abs: bool,
    /// `-k`
    pub simple_refine: bool,
}

impl PdrConfig {
    pub fn flags(&self) -> [bool; NUM_FLAGS] {
        [
            self.skip_general,
            self.two_rounds,
            self.skip_down,
            self.ctgs,
            self.flop_prio,
            self.flop_order,
            self.eager_push,
            self.use_abs,
            self.simple_refine,
        ]
    }

    pub fn from_flags(f: [bool; NUM_FLAGS]) -> PdrConfig {
        PdrConfig {
            skip_general: f[0],
            two_rounds: f[1],
            skip_down: f[2],
            ctgs: f[3],
            flop_prio: f[4],
            flop_order: f[5],
            eager_push: f[6],
            use_abs: f[7],
            simple_refine: f[8],
        }
    }

    /// Nine-bit code with `g` as the most significant bit, so numeric order is
    /// lexicographic order of the bit-vector.
    pub fn bits(&self) -> u16 {
        self.flags().iter().fold(0, |acc, &b| (acc << 1) | b as u16)
    }

    pub fn from_bits(bits: u16) -> PdrConfig {
        assert!(bits < 1 << NUM_FLAGS, "bit-vector {bits} has more than 9 bits");
        PdrConfig::from_flags(std::array::from_fn(|i| (bits >> (NUM_FLAGS - 1 - i)) & 1 == 1))
    }

    /// Flags as 0/1 reals in bit-vector order.
    pub fn as_vector(&self) -> [f64; NUM_FLAGS] {
        self.flags().map(|b| b as u8 as f64)
    }

    pub fn violated_rules(&self) -> Vec<Rule> {
        let c = self;
        let mut out = Vec::new();
        if c.skip_general && (c.two_rounds || c.skip_down || c.ctgs || c.flop_prio || c.flop_order) {
            out.push(Rule::SkipGeneralIsMaster);
        }
        if c.flop_order && !c.flop_prio {
            out.push(Rule::FlopOrderNeedsPrio);
        }
        if c.ctgs && c.skip_down {
            out.push(Rule::CtgsNeedsDown);
        }
        if c.simple_refine && !c.use_abs {
            out.push(Rule::SimpleRefineNeedsAbs);
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.violated_rules().is_empty()
    }

    pub fn validate(self) -> Result<PdrConfig, ParamError> {
        let rules = self.violated_rules();
        if rules.is_empty() {
            Ok(self)
        } else {
            Err(ParamError::Invalid { config: self.to_bit_string(), rules })
        }
    }

    /// `pdr` followed by one `-x` token per enabled flag.
    pub fn to_flag_string(&self) -> Result<String, ParamError> {
        self.validate()?;
        Ok(self.render_flags())
    }

    fn render_flags(&self) -> String {
        let mut s = String::from("pdr");
        for (on, letter) in self.flags().iter().zip(FLAG_LETTERS) {
            if *on {
                s.push_str(" -");
                s.push(letter);
            }
        }
        s
    }

    /// Inverse of [`PdrConfig::to_flag_string`]. Rule validity is not checked.
    pub fn from_flag_string(text: &str) -> Result<PdrConfig, ParamError> {
        let mut tokens = text.split_whitespace().peekable();
        if tokens.peek() == Some(&"pdr") {
            tokens.next();
        }
        let mut flags = [false; NUM_FLAGS];
        for tok in tokens {
            let letter = tok
                .strip_prefix('-')
                .filter(|s| s.chars().count() == 1)
                .and_then(|s| s.chars().next())
                .ok_or_else(|| ParamError::UnknownFlag(tok.to_string()))?;
            let idx = FLAG_LETTERS.iter().position(|&l| l == letter).ok_or_else(|| ParamError::UnknownFlag(tok.to_string()))?;
            if std::mem::replace(&mut flags[idx], true) {
                return Err(ParamError::DuplicateFlag(letter));
            }
        }
        Ok(PdrConfig::from_flags(flags))
    }

    /// `grncyfitk=010000100` style encoding.
    pub fn to_bit_string(&self) -> String {
        let bits: String = self.flags().iter().map(|&b| if b { '1' } else { '0' }).collect();
        format!("grncyfitk={bits}")
    }

    pub fn from_bit_string(text: &str) -> Result<PdrConfig, ParamError> {
        let bits = text.strip_prefix("grncyfitk=").unwrap_or(text);
        if bits.len() != NUM_FLAGS || !bits.chars().all(|c| c == '0' || c == '1') {
            return Err(ParamError::BadBits(text.to_string()));
        }
        let mut flags = [false; NUM_FLAGS];
        for (f, c) in flags.iter_mut().zip(bits.chars()) {
            *f = c == '1';
        }
        Ok(PdrConfig::from_flags(flags))
    }
}

impl fmt::Display for PdrConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render_flags())
    }
}

impl FromStr for PdrConfig {
    type Err = ParamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PdrConfig::from_flag_string(s)
    }
}

/// All rule-abiding configurations, sorted by bit-vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigSpace {
    configs: Vec<PdrConfig>,
}

impl ConfigSpace {
    pub fn enumerate_valid() -> ConfigSpace {
        let configs = (0..1u16 << NUM_FLAGS).map(PdrConfig::from_bits).filter(PdrConfig::is_valid).collect();
        ConfigSpace { configs }
    }

    pub fn configs(&self) -> &[PdrConfig] {
        &self.configs
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn index_of(&self, c: &PdrConfig) -> Option<usize> {
        self.configs.binary_search_by_key(&c.bits(), PdrConfig::bits).ok()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, PdrConfig> {
        self.configs.iter()
    }
}

impl<'a> IntoIterator for &'a ConfigSpace {
    type Item = &'a PdrConfig;
    type IntoIter = std::slice::Iter<'a, PdrConfig>;

    fn into_iter(self) -> Self::IntoIter {
        self.configs.iter()
    }
}
