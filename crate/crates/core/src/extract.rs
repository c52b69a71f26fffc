//! End-to-end record extraction: CFG, path selection and symbolic execution
//! over every function of a listing corpus.
//!
//! Thunk addresses only mean anything inside their own module, so the import
//! table is augmented per binary before resolution.

use std::collections::BTreeMap;

use crate::cfg::{build_cfg, select_path};
use crate::derive_seed;
use crate::error::Result;
use crate::listing::{ApiSignatureDb, FunctionListing, ImportTable};
use crate::symexec::{execute_path, ApiCallRecord};

#[derive(Clone, Debug, Default)]
pub struct ExtractOutcome {
    pub records: Vec<ApiCallRecord>,
    /// Records per binary, in input order.
    pub per_binary: BTreeMap<String, usize>,
    /// Records per API name.
    pub per_api: BTreeMap<String, usize>,
    /// Calls that resolved to an import with no signature entry.
    pub skipped_no_signature: usize,
    /// Functions whose selected path never reached a return node.
    pub degraded_paths: usize,
}

/// Run ingest -> CFG -> longest path -> symbolic execution over the corpus.
/// Deterministic: per-function path seeds are derived from `seed`, the
/// binary id and the function entry.
pub fn extract_records(
    functions: &[FunctionListing],
    imports: &ImportTable,
    sigs: &ApiSignatureDb,
    seed: u64,
) -> Result<ExtractOutcome> {
    let mut by_binary: Vec<(&str, Vec<&FunctionListing>)> = Vec::new();
    for f in functions {
        match by_binary.last_mut() {
            Some((id, group)) if *id == f.binary_id => group.push(f),
            _ => by_binary.push((f.binary_id.as_str(), vec![f])),
        }
    }

    let mut out = ExtractOutcome::default();
    for (binary_id, group) in by_binary {
        let mut scoped = imports.clone();
        let owned: Vec<FunctionListing> = group.iter().map(|f| (*f).clone()).collect();
        scoped.augment_with_thunks(&owned);
        for f in &owned {
            let g = build_cfg(f)?;
            let path_seed = derive_seed(seed, &format!("path:{binary_id}:{:#x}", f.entry_addr));
            let path = select_path(&g, path_seed);
            if path.degraded {
                out.degraded_paths += 1;
            }
            let exec = execute_path(f, &g, &path.nodes, &scoped, sigs);
            out.skipped_no_signature += exec.skipped_no_signature;
            for rec in exec.records {
                *out.per_binary.entry(rec.binary_id.clone()).or_default() += 1;
                *out
                    .per_api
                    .entry(rec.api.clone().unwrap_or_default())
                    .or_default() += 1;
                out.records.push(rec);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::listing::parse_listing;

    #[test]
    fn thunks_resolve_within_their_own_binary_only() {
        // Two binaries place a thunk at the same address but jump to
        // different imports; each binary's calls must resolve to its own.
        let mk = |bid: &str, import: u32| {
            format!(
                concat!(
                    r#"{{"binary_id":"{bid}","entry":4096,"image_range":[4096,65536],"#,
                    r#""instructions":[{{"addr":4096,"mn":"jmp","ops":[{{"k":"imm","val":{imp}}}]}}]}}"#,
                    "\n",
                    r#"{{"binary_id":"{bid}","entry":8192,"image_range":[4096,65536],"instructions":["#,
                    r#"{{"addr":8192,"mn":"push","ops":[{{"k":"imm","val":1}}]}},"#,
                    r#"{{"addr":8194,"mn":"push","ops":[{{"k":"imm","val":2}}]}},"#,
                    r#"{{"addr":8196,"mn":"push","ops":[{{"k":"imm","val":3}}]}},"#,
                    r#"{{"addr":8198,"mn":"call","ops":[{{"k":"imm","val":4096}}]}},"#,
                    r#"{{"addr":8203,"mn":"ret","ops":[]}}]}}"#,
                ),
                bid = bid,
                imp = import,
            )
        };
        let text = format!("{}\n{}\n", mk("alpha", 0x100000), mk("beta", 0x100010));
        let functions = parse_listing(&text).unwrap();
        let mut imports = ImportTable::new();
        imports.insert(0x100000, "HeapAlloc");
        imports.insert(0x100010, "CheckDlgButton");
        let out =
            extract_records(&functions, &imports, &ApiSignatureDb::default_db(), 0).unwrap();
        assert_eq!(out.records.len(), 2);
        let by_bin: BTreeMap<&str, &str> = out
            .records
            .iter()
            .map(|r| (r.binary_id.as_str(), r.api.as_deref().unwrap()))
            .collect();
        assert_eq!(by_bin["alpha"], "HeapAlloc");
        assert_eq!(by_bin["beta"], "CheckDlgButton");
        assert_eq!(out.per_api["HeapAlloc"], 1);
    }
}
