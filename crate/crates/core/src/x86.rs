//! Instruction and operand model for 32-bit x86 listings.
//!
//! The executor only needs the handful of mnemonics that move API-call
//! arguments around (stack ops, `mov`/`lea`, and the simple ALU ops); every
//! other mnemonic is carried through with [`OpClass::Other`] and ignored
//! during execution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The eight general-purpose 32-bit registers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Register {
    Eax,
    Ebx,
    Ecx,
    Edx,
    Esi,
    Edi,
    Ebp,
    Esp,
}

pub const ALL_REGISTERS: [Register; 8] = [
    Register::Eax,
    Register::Ebx,
    Register::Ecx,
    Register::Edx,
    Register::Esi,
    Register::Edi,
    Register::Ebp,
    Register::Esp,
];

impl Register {
    pub fn name(self) -> &'static str {
        match self {
            Register::Eax => "eax",
            Register::Ebx => "ebx",
            Register::Ecx => "ecx",
            Register::Edx => "edx",
            Register::Esi => "esi",
            Register::Edi => "edi",
            Register::Ebp => "ebp",
            Register::Esp => "esp",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Wire name for an access of the given width. High and low byte halves
    /// collapse to the low name; the executor never told them apart anyway.
    pub fn alias_name(self, size: u8) -> &'static str {
        let names: [&str; 3] = match self {
            Register::Eax => ["al", "ax", "eax"],
            Register::Ebx => ["bl", "bx", "ebx"],
            Register::Ecx => ["cl", "cx", "ecx"],
            Register::Edx => ["dl", "dx", "edx"],
            Register::Esi => ["si", "si", "esi"],
            Register::Edi => ["di", "di", "edi"],
            Register::Ebp => ["bp", "bp", "ebp"],
            Register::Esp => ["sp", "sp", "esp"],
        };
        match size {
            1 => names[0],
            2 => names[1],
            _ => names[2],
        }
    }

    /// Only the four classic data registers expose 8-bit halves.
    pub fn has_byte_half(self) -> bool {
        matches!(
            self,
            Register::Eax | Register::Ebx | Register::Ecx | Register::Edx
        )
    }

    /// Resolve a register name, including 16- and 8-bit aliases, to its
    /// canonical 32-bit register and the access size the name implies.
    pub fn parse_alias(name: &str) -> Option<(Register, u8)> {
        use Register::*;
        Some(match name {
            "eax" => (Eax, 4),
            "ebx" => (Ebx, 4),
            "ecx" => (Ecx, 4),
            "edx" => (Edx, 4),
            "esi" => (Esi, 4),
            "edi" => (Edi, 4),
            "ebp" => (Ebp, 4),
            "esp" => (Esp, 4),
            "ax" => (Eax, 2),
            "bx" => (Ebx, 2),
            "cx" => (Ecx, 2),
            "dx" => (Edx, 2),
            "si" => (Esi, 2),
            "di" => (Edi, 2),
            "bp" => (Ebp, 2),
            "sp" => (Esp, 2),
            "al" | "ah" => (Eax, 1),
            "bl" | "bh" => (Ebx, 1),
            "cl" | "ch" => (Ecx, 1),
            "dl" | "dh" => (Edx, 1),
            _ => return None,
        })
    }

    /// Parse a name that must be a plain 32-bit register (memory base/index).
    pub fn parse_full(name: &str) -> Option<Register> {
        match Register::parse_alias(name) {
            Some((r, 4)) => Some(r),
            _ => None,
        }
    }
}

/// A memory operand: `[base + index*scale + disp]` with an access size.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemRef {
    pub base: Option<Register>,
    pub index: Option<Register>,
    pub scale: u8,
    pub disp: i32,
    pub size: u8,
}

impl MemRef {
    /// Canonical address string, e.g. `ebp-0xC` or `0x1068EEC`.
    /// Hex digits are upper-case, without leading zeros.
    pub fn addr_string(&self) -> String {
        if self.base.is_none() && self.index.is_none() {
            return format!("0x{:X}", self.disp as u32);
        }
        let mut s = String::new();
        if let Some(b) = self.base {
            s.push_str(b.name());
        }
        if let Some(i) = self.index {
            if !s.is_empty() {
                s.push('+');
            }
            s.push_str(i.name());
            s.push('*');
            s.push_str(&self.scale.to_string());
        }
        if self.disp > 0 {
            s.push_str(&format!("+0x{:X}", self.disp));
        } else if self.disp < 0 {
            s.push_str(&format!("-0x{:X}", (self.disp as i64).unsigned_abs()));
        }
        s
    }

    /// Simulated-memory key, `size:addr`.
    pub fn key(&self) -> String {
        format!("{}:{}", self.size, self.addr_string())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operand {
    Reg { reg: Register, size: u8 },
    Imm { val: u32 },
    Mem(MemRef),
}

impl Operand {
    pub fn as_imm(&self) -> Option<u32> {
        match self {
            Operand::Imm { val } => Some(*val),
            _ => None,
        }
    }
}

/// Coarse instruction classification driving both CFG construction and
/// symbolic execution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpClass {
    /// One of the executable data/ALU mnemonics.
    Data,
    Call,
    Branch,
    Return,
    Other,
}

/// Mnemonics the executor knows how to step through.
pub const SUPPORTED_MNEMONICS: [&str; 9] = [
    "push", "pop", "mov", "lea", "xor", "add", "sub", "inc", "dec",
];

pub fn classify_mnemonic(mn: &str) -> OpClass {
    if SUPPORTED_MNEMONICS.contains(&mn) {
        return OpClass::Data;
    }
    match mn {
        "call" => OpClass::Call,
        "ret" | "retn" => OpClass::Return,
        _ if is_branch_mnemonic(mn) => OpClass::Branch,
        _ => OpClass::Other,
    }
}

pub fn is_branch_mnemonic(mn: &str) -> bool {
    mn == "jmp" || is_conditional_branch(mn)
}

/// The `j*` condition-code family plus the loop instructions. `jmp` is the
/// only unconditional branch.
pub fn is_conditional_branch(mn: &str) -> bool {
    if matches!(mn, "loop" | "loope" | "loopne" | "loopz" | "loopnz") {
        return true;
    }
    mn != "jmp" && mn.len() >= 2 && mn.len() <= 6 && mn.starts_with('j')
}

/// Expected operand count for classified mnemonics; `None` means any arity is
/// accepted (unclassified mnemonics are carried, not executed).
pub fn mnemonic_arity(mn: &str, class: OpClass) -> Option<usize> {
    match class {
        OpClass::Data => Some(match mn {
            "push" | "pop" | "inc" | "dec" => 1,
            _ => 2,
        }),
        OpClass::Call | OpClass::Branch => Some(1),
        OpClass::Return => Some(0),
        OpClass::Other => None,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub addr: u32,
    pub mnemonic: String,
    pub operands: Vec<Operand>,
    pub op_class: OpClass,
}

impl Instruction {
    /// Build and validate an instruction from parsed parts. The class is
    /// derived from the mnemonic; arity is checked for classified mnemonics.
    pub fn new(addr: u32, mnemonic: String, operands: Vec<Operand>) -> Result<Instruction> {
        let mnemonic = mnemonic.to_ascii_lowercase();
        let op_class = classify_mnemonic(&mnemonic);
        if let Some(arity) = mnemonic_arity(&mnemonic, op_class) {
            if operands.len() != arity {
                return Err(Error::validation(format!(
                    "0x{addr:X}: `{mnemonic}` takes {arity} operand(s), got {}",
                    operands.len()
                )));
            }
        }
        for op in &operands {
            match op {
                Operand::Reg { reg, size } if ![1, 2, 4].contains(size) || (*size == 1 && !reg.has_byte_half()) => {
                    return Err(Error::validation(format!(
                        "0x{addr:X}: register {} has no {size}-byte access",
                        reg.name()
                    )));
                }
                Operand::Mem(m) => {
                    if ![1, 2, 4].contains(&m.size) {
                        return Err(Error::validation(format!(
                            "0x{addr:X}: memory access size {} not in {{1,2,4}}",
                            m.size
                        )));
                    }
                    if m.index.is_some() && ![1, 2, 4, 8].contains(&m.scale) {
                        return Err(Error::validation(format!(
                            "0x{addr:X}: scale {} not in {{1,2,4,8}}",
                            m.scale
                        )));
                    }
                }
                _ => {}
            }
        }
        Ok(Instruction {
            addr,
            mnemonic,
            operands,
            op_class,
        })
    }

    pub fn is_conditional_branch(&self) -> bool {
        self.op_class == OpClass::Branch && is_conditional_branch(&self.mnemonic)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_mnemonics_classify_as_data() {
        for mn in SUPPORTED_MNEMONICS {
            assert_eq!(classify_mnemonic(mn), OpClass::Data, "{mn}");
        }
    }

    #[test]
    fn branch_family() {
        for mn in ["jmp", "je", "jne", "ja", "jbe", "jz", "jnz", "loop", "loopne"] {
            assert_eq!(classify_mnemonic(mn), OpClass::Branch, "{mn}");
        }
        assert!(!is_conditional_branch("jmp"));
        assert!(is_conditional_branch("jecxz"));
        assert_eq!(classify_mnemonic("cmp"), OpClass::Other);
        assert_eq!(classify_mnemonic("test"), OpClass::Other);
    }

    #[test]
    fn alias_resolution() {
        assert_eq!(Register::parse_alias("ax"), Some((Register::Eax, 2)));
        assert_eq!(Register::parse_alias("ch"), Some((Register::Ecx, 1)));
        assert_eq!(Register::parse_alias("r8d"), None);
        assert_eq!(Register::parse_full("si"), None);
        assert_eq!(Register::parse_full("esi"), Some(Register::Esi));
    }

    #[test]
    fn mem_key_rendering() {
        let m = MemRef {
            base: Some(Register::Ebp),
            index: None,
            scale: 1,
            disp: -0xC,
            size: 4,
        };
        assert_eq!(m.key(), "4:ebp-0xC");
        let abs = MemRef {
            base: None,
            index: None,
            scale: 1,
            disp: 0x1068EEC,
            size: 2,
        };
        assert_eq!(abs.key(), "2:0x1068EEC");
        let scaled = MemRef {
            base: Some(Register::Ebx),
            index: Some(Register::Esi),
            scale: 4,
            disp: 0x10,
            size: 4,
        };
        assert_eq!(scaled.key(), "4:ebx+esi*4+0x10");
    }

    #[test]
    fn arity_is_enforced() {
        assert!(Instruction::new(0, "push".into(), vec![]).is_err());
        assert!(Instruction::new(
            0,
            "ret".into(),
            vec![Operand::Imm { val: 8 }]
        )
        .is_err());
        let i = Instruction::new(0, "nop".into(), vec![]).unwrap();
        assert_eq!(i.op_class, OpClass::Other);
    }
}
