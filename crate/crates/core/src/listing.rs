//! Parsing of pre-disassembled function listings, import tables and the API
//! signature database.
//!
//! Listings arrive as JSONL, one function per line. Producing that format is
//! the job of an external disassembler; this crate only consumes it.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::x86::{Instruction, MemRef, OpClass, Operand, Register};

/// One disassembled function, address-ordered.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionListing {
    pub binary_id: String,
    pub entry_addr: u32,
    /// Virtual-address interval of the containing module, inclusive.
    pub image_range: (u32, u32),
    pub instructions: Vec<Instruction>,
}

impl FunctionListing {
    pub fn addr_span(&self) -> (u32, u32) {
        (
            self.instructions.first().map(|i| i.addr).unwrap_or(0),
            self.instructions.last().map(|i| i.addr).unwrap_or(0),
        )
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "k", rename_all = "lowercase")]
enum WireOperand {
    Reg {
        name: String,
        #[serde(default)]
        size: Option<u8>,
    },
    Imm {
        val: u32,
    },
    Mem {
        #[serde(default)]
        base: Option<String>,
        #[serde(default)]
        index: Option<String>,
        #[serde(default = "one")]
        scale: u8,
        #[serde(default)]
        disp: i32,
        size: u8,
    },
}

fn one() -> u8 {
    1
}

#[derive(Serialize, Deserialize)]
struct WireInstruction {
    addr: u32,
    mn: String,
    #[serde(default)]
    ops: Vec<WireOperand>,
}

#[derive(Serialize, Deserialize)]
struct WireFunction {
    binary_id: String,
    entry: u32,
    image_range: (u32, u32),
    instructions: Vec<WireInstruction>,
}

fn operand_from_wire(w: WireOperand) -> std::result::Result<Operand, String> {
    match w {
        WireOperand::Reg { name, size } => {
            let (reg, implied) = Register::parse_alias(&name)
                .ok_or_else(|| format!("unknown register `{name}`"))?;
            let size = size.unwrap_or(implied);
            if size != implied {
                return Err(format!(
                    "register `{name}` implies access size {implied}, got {size}"
                ));
            }
            Ok(Operand::Reg { reg, size })
        }
        WireOperand::Imm { val } => Ok(Operand::Imm { val }),
        WireOperand::Mem {
            base,
            index,
            scale,
            disp,
            size,
        } => {
            let parse = |name: Option<String>| -> std::result::Result<Option<Register>, String> {
                match name {
                    None => Ok(None),
                    Some(n) => Register::parse_full(&n)
                        .map(Some)
                        .ok_or_else(|| format!("unknown register `{n}` in memory operand")),
                }
            };
            Ok(Operand::Mem(MemRef {
                base: parse(base)?,
                index: parse(index)?,
                scale,
                disp,
                size,
            }))
        }
    }
}

fn operand_to_wire(op: &Operand) -> WireOperand {
    match op {
        Operand::Reg { reg, size } => WireOperand::Reg {
            // The name carries the access width on the wire; high byte
            // halves collapse to the low name, which is all the executor
            // distinguishes anyway.
            name: reg.alias_name(*size).to_string(),
            size: Some(*size),
        },
        Operand::Imm { val } => WireOperand::Imm { val: *val },
        Operand::Mem(m) => WireOperand::Mem {
            base: m.base.map(|r| r.name().to_string()),
            index: m.index.map(|r| r.name().to_string()),
            scale: m.scale,
            disp: m.disp,
            size: m.size,
        },
    }
}

fn function_from_wire(w: WireFunction, line: usize) -> Result<FunctionListing> {
    if w.instructions.is_empty() {
        return Err(Error::parse(line, "function has no instructions"));
    }
    let mut instructions = Vec::with_capacity(w.instructions.len());
    for wi in w.instructions {
        let mut ops = Vec::with_capacity(wi.ops.len());
        for wop in wi.ops {
            ops.push(operand_from_wire(wop).map_err(|msg| Error::parse(line, msg))?);
        }
        let ins = Instruction::new(wi.addr, wi.mn, ops)
            .map_err(|e| Error::parse(line, e.to_string()))?;
        instructions.push(ins);
    }
    for pair in instructions.windows(2) {
        if pair[1].addr <= pair[0].addr {
            return Err(Error::validation(format!(
                "line {line}: instruction addresses must be strictly increasing \
                 (0x{:X} then 0x{:X})",
                pair[0].addr, pair[1].addr
            )));
        }
    }
    if instructions[0].addr != w.entry {
        return Err(Error::validation(format!(
            "line {line}: entry 0x{:X} does not match first instruction 0x{:X}",
            w.entry, instructions[0].addr
        )));
    }
    Ok(FunctionListing {
        binary_id: w.binary_id,
        entry_addr: w.entry,
        image_range: w.image_range,
        instructions,
    })
}

/// Parse a JSONL listing file. Blank lines are skipped; anything else must be
/// one well-formed function object per line.
pub fn parse_listing(text: &str) -> Result<Vec<FunctionListing>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let wire: WireFunction =
            serde_json::from_str(raw).map_err(|e| Error::parse(line, e.to_string()))?;
        out.push(function_from_wire(wire, line)?);
    }
    Ok(out)
}

/// Serialize listings back to the JSONL wire format. `parse_listing` of the
/// output reproduces the input exactly.
pub fn serialize_listing(functions: &[FunctionListing]) -> String {
    let mut out = String::new();
    for f in functions {
        let wire = WireFunction {
            binary_id: f.binary_id.clone(),
            entry: f.entry_addr,
            image_range: f.image_range,
            instructions: f
                .instructions
                .iter()
                .map(|i| WireInstruction {
                    addr: i.addr,
                    mn: i.mnemonic.clone(),
                    ops: i.operands.iter().map(operand_to_wire).collect(),
                })
                .collect(),
        };
        let _ = writeln!(
            out,
            "{}",
            serde_json::to_string(&wire).expect("listing serialization cannot fail")
        );
    }
    out
}

/// Map from call-target virtual address to API name, including thunks.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ImportTable {
    map: BTreeMap<u32, String>,
}

impl ImportTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, addr: u32, name: impl Into<String>) {
        self.map.insert(addr, name.into());
    }

    pub fn get(&self, addr: u32) -> Option<&str> {
        self.map.get(&addr).map(String::as_str)
    }

    pub fn contains(&self, addr: u32) -> bool {
        self.map.contains_key(&addr)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Parse the JSON map `{"<hex addr>": "<ApiName>"}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, String> = serde_json::from_str(text)?;
        let mut map = BTreeMap::new();
        for (k, v) in raw {
            let addr = parse_hex_u32(&k)
                .ok_or_else(|| Error::validation(format!("bad import address `{k}`")))?;
            if v.is_empty() {
                return Err(Error::validation(format!(
                    "import at {k} has an empty name"
                )));
            }
            if map.insert(addr, v).is_some() {
                return Err(Error::validation(format!("duplicate import address {k}")));
            }
        }
        Ok(ImportTable { map })
    }

    pub fn to_json(&self) -> String {
        let raw: BTreeMap<String, &str> = self
            .map
            .iter()
            .map(|(a, n)| (format!("0x{a:X}"), n.as_str()))
            .collect();
        serde_json::to_string_pretty(&raw).expect("import table serialization cannot fail")
    }

    /// Add one-hop thunks: any function whose first instruction is a `jmp`
    /// straight to an imported address resolves to that import. Chains of
    /// thunks are deliberately not followed.
    pub fn augment_with_thunks(&mut self, functions: &[FunctionListing]) {
        let mut additions = Vec::new();
        for f in functions {
            let first = &f.instructions[0];
            if first.op_class == OpClass::Branch && first.mnemonic == "jmp" {
                if let Some(target) = first.operands.first().and_then(Operand::as_imm) {
                    if let Some(name) = self.map.get(&target) {
                        additions.push((f.entry_addr, name.clone()));
                    }
                }
            }
        }
        for (addr, name) in additions {
            self.map.entry(addr).or_insert(name);
        }
    }
}

fn parse_hex_u32(s: &str) -> Option<u32> {
    let t = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X"))?;
    u32::from_str_radix(t, 16).ok()
}

/// The 25 covered API functions and their stdcall argument counts.
pub const DEFAULT_API_SIGNATURES: [(&str, u8); 25] = [
    ("CheckDlgButton", 3),
    ("CoCreateInstance", 5),
    ("CompareString", 6),
    ("CreateFile", 7),
    ("CreateWindowEx", 12),
    ("DeviceIoControl", 8),
    ("FormatMessage", 7),
    ("GetLocaleInfo", 4),
    ("HeapAlloc", 3),
    ("LoadString", 4),
    ("MessageBox", 4),
    ("MultiByteToWideChar", 6),
    ("PostMessage", 4),
    ("ReadFile", 5),
    ("RegCreateKeyEx", 9),
    ("RegOpenKeyEx", 5),
    ("RegQueryValueEx", 6),
    ("RegSetValueEx", 6),
    ("SendDlgItemMessage", 5),
    ("SendMessage", 4),
    ("SetDlgItemText", 3),
    ("SetTimer", 4),
    ("SetWindowPos", 7),
    ("WideCharToMultiByte", 8),
    ("WriteFile", 5),
];

/// Map from API name to its argument count; counts are bounded to 3..=12.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ApiSignatureDb {
    map: BTreeMap<String, u8>,
}

impl ApiSignatureDb {
    /// The shipped database covering the 25 default API names.
    pub fn default_db() -> Self {
        let map = DEFAULT_API_SIGNATURES
            .iter()
            .map(|(n, c)| (n.to_string(), *c))
            .collect();
        ApiSignatureDb { map }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: BTreeMap<String, u8> = serde_json::from_str(text)?;
        let db = ApiSignatureDb { map };
        db.validate()?;
        Ok(db)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.map).expect("signature db serialization cannot fail")
    }

    fn validate(&self) -> Result<()> {
        for (name, n) in &self.map {
            if name.is_empty() {
                return Err(Error::validation("empty API name in signature db"));
            }
            if !(3..=12).contains(n) {
                return Err(Error::validation(format!(
                    "API `{name}` has {n} arguments; supported range is 3..=12"
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<u8> {
        self.map.get(name).copied()
    }

    /// API names in canonical (lexicographic) order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_memory_write_example() {
        let line = r#"{"binary_id":"b","entry":4198400,"image_range":[4194304,4718592],"instructions":[{"addr":4198400,"mn":"mov","ops":[{"k":"mem","base":"ebp","disp":-12,"size":4},{"k":"imm","val":4096}]}]}"#;
        let fs = parse_listing(line).unwrap();
        assert_eq!(fs.len(), 1);
        let ins = &fs[0].instructions[0];
        assert_eq!(ins.mnemonic, "mov");
        assert_eq!(
            ins.operands[0],
            Operand::Mem(MemRef {
                base: Some(Register::Ebp),
                index: None,
                scale: 1,
                disp: -0xC,
                size: 4
            })
        );
        assert_eq!(ins.operands[1], Operand::Imm { val: 0x1000 });
    }

    #[test]
    fn empty_input_is_empty_list() {
        assert!(parse_listing("").unwrap().is_empty());
        assert!(parse_listing("\n\n").unwrap().is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "\n{not json}\n";
        let err = parse_listing(text).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn unknown_register_is_a_parse_error() {
        let line = r#"{"binary_id":"b","entry":0,"image_range":[0,0],"instructions":[{"addr":0,"mn":"push","ops":[{"k":"reg","name":"r9"}]}]}"#;
        assert!(parse_listing(line).is_err());
    }

    #[test]
    fn overlapping_addresses_rejected() {
        let line = r#"{"binary_id":"b","entry":16,"image_range":[0,0],"instructions":[{"addr":16,"mn":"nop","ops":[]},{"addr":16,"mn":"nop","ops":[]}]}"#;
        let err = parse_listing(line).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn import_table_round_trip_and_thunks() {
        let imports = ImportTable::from_json(r#"{"0x1001000":"ReadFile"}"#).unwrap();
        assert_eq!(imports.get(0x1001000), Some("ReadFile"));

        let thunk = r#"{"binary_id":"b","entry":4096,"image_range":[0,65536],"instructions":[{"addr":4096,"mn":"jmp","ops":[{"k":"imm","val":16781312}]}]}"#;
        let fs = parse_listing(thunk).unwrap();
        let mut imports = imports;
        imports.augment_with_thunks(&fs);
        assert_eq!(imports.get(4096), Some("ReadFile"));

        let json = imports.to_json();
        let reparsed = ImportTable::from_json(&json).unwrap();
        assert_eq!(reparsed, imports);
    }

    #[test]
    fn default_signature_db_is_within_bounds() {
        let db = ApiSignatureDb::default_db();
        assert_eq!(db.len(), 25);
        for name in db.names() {
            let n = db.get(name).unwrap();
            assert!((3..=12).contains(&n), "{name}: {n}");
        }
        assert_eq!(db.get("CreateWindowEx"), Some(12));
    }

    #[test]
    fn signature_db_rejects_out_of_range_counts() {
        assert!(ApiSignatureDb::from_json(r#"{"TwoArgs": 2}"#).is_err());
        assert!(ApiSignatureDb::from_json(r#"{"Wide": 13}"#).is_err());
    }
}
