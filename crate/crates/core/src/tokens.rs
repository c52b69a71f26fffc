//! Argument abstraction: collapse raw stack values onto a small token
//! alphabet, and maintain the training vocabulary.
//!
//! Integers are the interesting case. Pointers become `"ptr"`, recognized
//! constants stay verbatim (`"0x146"`, `"1"`), and everything else is reduced
//! to the length of its hex rendering (`0x1000` -> `"4"`), keeping only the
//! scale of the value.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::symexec::{ApiCallRecord, RawArg, SymValue};

pub type Token = String;

/// Values below this render as bare decimal tokens and always count as
/// predefined.
pub const SMALL_CONSTANT_LIMIT: u32 = 10;

/// Default user-space band treated as pointer territory, alongside the
/// per-binary image range.
pub const DEFAULT_POINTER_BAND: (u32, u32) = (0x0001_0000, 0x7FFE_FFFF);

/// Flag/enum/handle values kept verbatim by the shipped configuration. These
/// are hot argument constants for the covered APIs: registry hives and access
/// masks, file access masks and attributes, code pages and locales, common
/// window styles, messages and positioning flags.
pub const DEFAULT_WHITELIST: [u32; 38] = [
    0x0C,         // WM_SETTEXT
    0x0D,         // WM_GETTEXT
    0x0E,         // WM_GETTEXTLENGTH
    0x10,         // SWP_NOACTIVATE / MB_ICONHAND
    0x18, 0x20, 0x24, 0x30, 0x40, // message-box flag combinations / SWP_SHOWWINDOW
    0x80,         // FILE_ATTRIBUTE_NORMAL / WM_** range
    0x100, 0x101, // key messages
    0x104,        // MAX_PATH buffer length
    0x111,        // WM_COMMAND
    0x146, 0x170, // registry option flags observed in the wild
    0x200,        // WS_EX_CLIENTEDGE
    0x3E8,        // common 1000ms timer period
    0x400,        // LOCALE_USER_DEFAULT
    0x409,        // en-US LCID
    0x800, 0x1388, // LOCALE_SYSTEM_DEFAULT, 5000ms period
    0xFDE9,       // CP_UTF8
    0x4E4,        // CP_ACP (1252)
    0x20006,      // KEY_WRITE
    0x20019,      // KEY_READ
    0xF003F,      // KEY_ALL_ACCESS
    0xCF0000,     // WS_OVERLAPPEDWINDOW
    0x10000000,   // WS_VISIBLE
    0x40000000,   // GENERIC_WRITE / WS_CHILD
    0x80000000,   // GENERIC_READ / HKEY_CLASSES_ROOT
    0x80000001, 0x80000002, 0x80000003, 0x80000005, 0x80000006, // registry hives
    0xC0000000,   // GENERIC_READ|WRITE
    0xFFFFFFFF,   // INVALID_HANDLE_VALUE / -1 lengths
];

/// Set of integer values treated as predefined constants.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstantWhitelist {
    values: BTreeSet<u32>,
}

impl Default for ConstantWhitelist {
    fn default() -> Self {
        ConstantWhitelist {
            values: DEFAULT_WHITELIST.into_iter().collect(),
        }
    }
}

impl ConstantWhitelist {
    pub fn empty() -> Self {
        ConstantWhitelist {
            values: BTreeSet::new(),
        }
    }

    pub fn from_values(values: impl IntoIterator<Item = u32>) -> Self {
        ConstantWhitelist {
            values: values.into_iter().collect(),
        }
    }

    /// Parse the config format: a JSON array of hex strings.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Vec<String> = serde_json::from_str(text)?;
        let mut values = BTreeSet::new();
        for s in &raw {
            let t = s
                .strip_prefix("0x")
                .or_else(|| s.strip_prefix("0X"))
                .unwrap_or(s);
            let v = u32::from_str_radix(t, 16)
                .map_err(|_| Error::validation(format!("bad whitelist entry `{s}`")))?;
            values.insert(v);
        }
        Ok(ConstantWhitelist { values })
    }

    pub fn to_hex_strings(&self) -> Vec<String> {
        self.values.iter().map(|v| format!("0x{v:X}")).collect()
    }

    /// Small decimals are always predefined; larger values must be listed.
    pub fn is_predefined(&self, value: u32) -> bool {
        value < SMALL_CONSTANT_LIMIT || self.values.contains(&value)
    }
}

/// Everything `abstract_arg` needs besides the value itself.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbstractionConfig {
    pub whitelist: ConstantWhitelist,
    /// Inclusive VA band classified as pointers in addition to the image
    /// range.
    pub pointer_band: (u32, u32),
}

impl Default for AbstractionConfig {
    fn default() -> Self {
        AbstractionConfig {
            whitelist: ConstantWhitelist::default(),
            pointer_band: DEFAULT_POINTER_BAND,
        }
    }
}

fn in_range(value: u32, (lo, hi): (u32, u32)) -> bool {
    lo < hi && (lo..=hi).contains(&value)
}

/// Render a predefined constant: bare decimal below
/// [`SMALL_CONSTANT_LIMIT`], canonical upper-case hex otherwise.
fn constant_token(value: u32) -> Token {
    if value < SMALL_CONSTANT_LIMIT {
        value.to_string()
    } else {
        format!("0x{value:X}")
    }
}

/// Digit-count encoding of an arbitrary integer: the length of its hex
/// rendering without the `0x` prefix, in 1..=8.
fn scale_token(value: u32) -> Token {
    format!("{:X}", value).len().to_string()
}

/// Map one collapsed stack value onto the token alphabet. Total and
/// deterministic.
pub fn abstract_arg(arg: &RawArg, cfg: &AbstractionConfig, image_range: (u32, u32)) -> Token {
    match arg {
        RawArg::Reg => "reg".into(),
        // Arguments and locals are interchangeable from the callee's side.
        RawArg::Arg | RawArg::Var => "var".into(),
        RawArg::Mem => "mem".into(),
        RawArg::Ret => "ret".into(),
        RawArg::Star => "*".into(),
        RawArg::Expr => "expr".into(),
        RawArg::Int { v } => {
            if in_range(*v, image_range) || in_range(*v, cfg.pointer_band) {
                "ptr".into()
            } else if cfg.whitelist.is_predefined(*v) {
                constant_token(*v)
            } else {
                scale_token(*v)
            }
        }
    }
}

/// [`abstract_arg`] lifted over the executor's value type.
pub fn abstract_value(v: &SymValue, cfg: &AbstractionConfig, image_range: (u32, u32)) -> Token {
    abstract_arg(&RawArg::from(v), cfg, image_range)
}

/// Abstract the first `len` captured values of a record, in stack order
/// (first value = first stdcall argument).
pub fn abstract_sequence(
    rec: &ApiCallRecord,
    len: usize,
    cfg: &AbstractionConfig,
) -> Result<Vec<Token>> {
    if len == 0 || len > rec.raw_args.len() {
        return Err(Error::contract(format!(
            "sequence length {len} outside 1..={}",
            rec.raw_args.len()
        )));
    }
    let image_range = rec.image_range.unwrap_or((0, 0));
    Ok(rec.raw_args[..len]
        .iter()
        .map(|a| abstract_arg(a, cfg, image_range))
        .collect())
}

/// Bijective token <-> dense index map, frozen after building. Index `W` is
/// reserved for out-of-vocabulary tokens seen only at prediction time.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<Token>,
    index: HashMap<Token, usize>,
}

impl Vocabulary {
    /// Assign indices in first-occurrence order over the corpus.
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a [Token]>) -> Vocabulary {
        let mut v = Vocabulary::default();
        for seq in corpus {
            for tok in seq {
                if !v.index.contains_key(tok) {
                    v.index.insert(tok.clone(), v.tokens.len());
                    v.tokens.push(tok.clone());
                }
            }
        }
        v
    }

    /// Number of distinct trained tokens.
    pub fn w(&self) -> usize {
        self.tokens.len()
    }

    pub fn oov_index(&self) -> usize {
        self.tokens.len()
    }

    /// Emission alphabet size including the OOV slot.
    pub fn w_total(&self) -> usize {
        self.tokens.len() + 1
    }

    /// Encoding never fails: unseen tokens land on the OOV index.
    pub fn encode(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(self.tokens.len())
    }

    pub fn encode_sequence(&self, tokens: &[Token]) -> Vec<usize> {
        tokens.iter().map(|t| self.encode(t)).collect()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }
}

impl Serialize for Vocabulary {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        // File format: {"<token>": index, ..., "oov_index": W}.
        let mut map: BTreeMap<&str, usize> = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();
        map.insert("oov_index", self.tokens.len());
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let mut map: BTreeMap<String, usize> = BTreeMap::deserialize(deserializer)?;
        let w = map
            .remove("oov_index")
            .ok_or_else(|| D::Error::custom("vocabulary missing oov_index"))?;
        if map.len() != w {
            return Err(D::Error::custom(format!(
                "vocabulary has {} tokens but oov_index {w}",
                map.len()
            )));
        }
        let mut tokens = vec![String::new(); w];
        for (tok, idx) in &map {
            let slot = tokens
                .get_mut(*idx)
                .ok_or_else(|| D::Error::custom(format!("token index {idx} out of range")))?;
            if !slot.is_empty() {
                return Err(D::Error::custom(format!("duplicate token index {idx}")));
            }
            *slot = tok.clone();
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Vocabulary { tokens, index })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn int(v: u32) -> RawArg {
        RawArg::Int { v }
    }

    #[test]
    fn documented_integer_encodings() {
        let cfg = AbstractionConfig::default();
        let no_image = (0, 0);
        assert_eq!(abstract_arg(&int(0x1000), &cfg, no_image), "4");
        assert_eq!(abstract_arg(&int(0x12), &cfg, no_image), "2");
        assert_eq!(abstract_arg(&int(0x80000002), &cfg, no_image), "0x80000002");
        assert_eq!(abstract_arg(&int(0x146), &cfg, no_image), "0x146");
        assert_eq!(abstract_arg(&int(1), &cfg, no_image), "1");
        assert_eq!(abstract_arg(&int(0), &cfg, no_image), "0");
    }

    #[test]
    fn symbolic_classes_map_to_their_keywords() {
        let cfg = AbstractionConfig::default();
        let expr = SymValue::Expr(
            crate::symexec::ExprOp::Sub,
            Box::new(SymValue::Expr(
                crate::symexec::ExprOp::Add,
                Box::new(SymValue::Reg(crate::x86::Register::Edx)),
                Box::new(SymValue::Reg(crate::x86::Register::Ebx)),
            )),
            Box::new(SymValue::Concrete(1)),
        );
        assert_eq!(abstract_value(&expr, &cfg, (0, 0)), "expr");
        assert_eq!(abstract_value(&SymValue::Star, &cfg, (0, 0)), "*");
        assert_eq!(abstract_value(&SymValue::Ret, &cfg, (0, 0)), "ret");
        assert_eq!(abstract_value(&SymValue::Arg(8), &cfg, (0, 0)), "var");
        assert_eq!(abstract_value(&SymValue::Var(12), &cfg, (0, 0)), "var");
        assert_eq!(abstract_value(&SymValue::MemCell(3), &cfg, (0, 0)), "mem");
        assert_eq!(
            abstract_value(&SymValue::Reg(crate::x86::Register::Esi), &cfg, (0, 0)),
            "reg"
        );
    }

    #[test]
    fn pointers_by_image_range_and_band() {
        let cfg = AbstractionConfig::default();
        let image = (0x400000, 0x480000);
        assert_eq!(abstract_arg(&int(0x411004), &cfg, image), "ptr");
        assert_eq!(abstract_arg(&int(0x12345), &cfg, image), "ptr"); // band
        assert_eq!(abstract_arg(&int(0x80001000), &cfg, image), "8"); // above band
    }

    #[test]
    fn pointer_check_precedes_whitelist() {
        // A whitelisted value inside the image range still reads as a pointer.
        let cfg = AbstractionConfig {
            whitelist: ConstantWhitelist::from_values([0x400100]),
            pointer_band: (0, 0),
        };
        assert_eq!(
            abstract_arg(&int(0x400100), &cfg, (0x400000, 0x480000)),
            "ptr"
        );
        assert_eq!(abstract_arg(&int(0x400100), &cfg, (0, 0)), "0x400100");
    }

    #[test]
    fn scale_token_spans_one_to_eight() {
        let cfg = AbstractionConfig {
            whitelist: ConstantWhitelist::empty(),
            pointer_band: (0, 0),
        };
        assert_eq!(abstract_arg(&int(0xF), &cfg, (0, 0)), "1");
        assert_eq!(abstract_arg(&int(0xFFFFFFFF), &cfg, (0, 0)), "8");
    }

    #[test]
    fn whitelist_json_round_trip() {
        let wl = ConstantWhitelist::from_json(r#"["0x146", "80000002"]"#).unwrap();
        assert!(wl.is_predefined(0x146));
        assert!(wl.is_predefined(0x80000002));
        assert!(wl.is_predefined(7)); // small constants are implicit
        assert!(!wl.is_predefined(0x1000));
        let json = serde_json::to_string(&wl.to_hex_strings()).unwrap();
        assert_eq!(ConstantWhitelist::from_json(&json).unwrap(), wl);
    }

    #[test]
    fn vocabulary_dedups_in_first_occurrence_order() {
        let a: Vec<Token> = vec!["var".into(), "1".into()];
        let b: Vec<Token> = vec!["var".into(), "2".into()];
        let v = Vocabulary::build([a.as_slice(), b.as_slice()]);
        assert_eq!(v.w(), 3);
        assert_eq!(v.encode("var"), 0);
        assert_eq!(v.encode("1"), 1);
        assert_eq!(v.encode("2"), 2);
        assert_eq!(v.encode("never-seen"), v.oov_index());
    }

    #[test]
    fn vocabulary_serialization_keeps_indices() {
        let a: Vec<Token> = vec!["ptr".into(), "0x146".into(), "var".into()];
        let v = Vocabulary::build([a.as_slice()]);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.encode("0x146"), 1);
        assert_eq!(back.oov_index(), 3);
    }
}
