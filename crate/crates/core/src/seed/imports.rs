//! Import prediction for names a seed references but never binds.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::process::{Command, Stdio};

use super::python;
use super::SeedFunction;

/// Maps an unbound identifier to the import statement that would bind it.
pub trait ImportResolver: Send + Sync {
    fn resolve(&self, name: &str) -> Option<String>;

    /// Resolves a batch; the default asks one name at a time.
    fn resolve_all(&self, names: &[String]) -> BTreeMap<String, String> {
        names
            .iter()
            .filter_map(|n| self.resolve(n).map(|stmt| (n.clone(), stmt)))
            .collect()
    }
}

/// Symbol table resolver.
///
/// * `modules`: names importable as-is (`import json`)
/// * `aliases`: conventional aliases (`np` -> `import numpy as np`)
/// * `symbols`: module -> names imported from it (`from typing import List`)
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportTable {
    #[serde(default)]
    pub modules: Vec<String>,
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
    #[serde(default)]
    pub symbols: BTreeMap<String, Vec<String>>,
}

const STDLIB_MODULES: &[&str] = &[
    "abc",
    "argparse",
    "array",
    "ast",
    "asyncio",
    "base64",
    "binascii",
    "bisect",
    "calendar",
    "cmath",
    "collections",
    "copy",
    "csv",
    "ctypes",
    "dataclasses",
    "datetime",
    "decimal",
    "difflib",
    "enum",
    "fnmatch",
    "fractions",
    "functools",
    "gc",
    "getpass",
    "glob",
    "gzip",
    "hashlib",
    "heapq",
    "hmac",
    "html",
    "http",
    "inspect",
    "io",
    "ipaddress",
    "itertools",
    "json",
    "logging",
    "math",
    "mimetypes",
    "operator",
    "os",
    "pathlib",
    "pickle",
    "platform",
    "pprint",
    "queue",
    "random",
    "re",
    "secrets",
    "shlex",
    "shutil",
    "signal",
    "socket",
    "sqlite3",
    "statistics",
    "string",
    "struct",
    "subprocess",
    "sys",
    "tempfile",
    "textwrap",
    "threading",
    "time",
    "timeit",
    "traceback",
    "types",
    "typing",
    "unicodedata",
    "unittest",
    "urllib",
    "uuid",
    "warnings",
    "weakref",
    "xml",
    "zipfile",
    "zlib",
    "numpy",
    "pandas",
    "torch",
    "scipy",
    "sklearn",
    "matplotlib",
    "requests",
    "yaml",
];

const ALIASES: &[(&str, &str)] = &[
    ("np", "numpy"),
    ("pd", "pandas"),
    ("plt", "matplotlib.pyplot"),
    ("tf", "tensorflow"),
    ("nn", "torch.nn"),
    ("F", "torch.nn.functional"),
    ("sp", "scipy"),
    ("dt", "datetime"),
];

const SYMBOLS: &[(&str, &[&str])] = &[
    (
        "collections",
        &[
            "Counter",
            "OrderedDict",
            "defaultdict",
            "deque",
            "namedtuple",
            "ChainMap",
        ],
    ),
    (
        "typing",
        &[
            "Any",
            "Callable",
            "Dict",
            "Generator",
            "Iterable",
            "Iterator",
            "List",
            "Mapping",
            "Optional",
            "Sequence",
            "Set",
            "Tuple",
            "Type",
            "TypeVar",
            "Union",
        ],
    ),
    (
        "functools",
        &[
            "lru_cache",
            "partial",
            "reduce",
            "wraps",
            "cache",
            "cmp_to_key",
        ],
    ),
    (
        "itertools",
        &[
            "chain",
            "combinations",
            "groupby",
            "islice",
            "permutations",
            "product",
        ],
    ),
    ("pathlib", &["Path"]),
    ("dataclasses", &["dataclass", "field"]),
    ("enum", &["Enum"]),
    ("copy", &["deepcopy"]),
    ("decimal", &["Decimal"]),
    ("fractions", &["Fraction"]),
    (
        "math",
        &["sqrt", "floor", "ceil", "inf", "pi", "gcd", "log"],
    ),
];

impl ImportTable {
    /// The built-in table: common standard-library and scientific modules.
    pub fn builtin() -> Self {
        Self {
            modules: STDLIB_MODULES.iter().map(|s| s.to_string()).collect(),
            aliases: ALIASES
                .iter()
                .map(|(a, m)| (a.to_string(), m.to_string()))
                .collect(),
            symbols: SYMBOLS
                .iter()
                .map(|(m, syms)| (m.to_string(), syms.iter().map(|s| s.to_string()).collect()))
                .collect(),
        }
    }

    /// Adds `other`'s entries on top of this table.
    pub fn extend(&mut self, other: ImportTable) {
        for m in other.modules {
            if !self.modules.contains(&m) {
                self.modules.push(m);
            }
        }
        self.aliases.extend(other.aliases);
        for (module, syms) in other.symbols {
            let entry = self.symbols.entry(module).or_default();
            for s in syms {
                if !entry.contains(&s) {
                    entry.push(s);
                }
            }
        }
    }
}

impl ImportResolver for ImportTable {
    fn resolve(&self, name: &str) -> Option<String> {
        if self.modules.iter().any(|m| m == name) {
            return Some(format!("import {name}"));
        }
        if let Some(module) = self.aliases.get(name) {
            return Some(format!("import {module} as {name}"));
        }
        self.symbols
            .iter()
            .find(|(_, syms)| syms.iter().any(|s| s == name))
            .map(|(module, _)| format!("from {module} import {name}"))
    }
}

/// Delegates to an external command.
///
/// The command receives a JSON array of names on stdin and must print a JSON
/// object mapping each resolvable name to an import statement.
#[derive(Debug, Clone)]
pub struct CommandResolver {
    pub command: Vec<String>,
}

impl ImportResolver for CommandResolver {
    fn resolve(&self, name: &str) -> Option<String> {
        self.resolve_all(&[name.to_string()]).remove(name)
    }

    fn resolve_all(&self, names: &[String]) -> BTreeMap<String, String> {
        let Some((program, args)) = self.command.split_first() else {
            return BTreeMap::new();
        };
        let child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn();
        let mut child = match child {
            Ok(c) => c,
            Err(e) => {
                log::warn!("import resolver {program} failed to start: {e}");
                return BTreeMap::new();
            }
        };
        if let Some(mut stdin) = child.stdin.take() {
            let _ = stdin.write_all(serde_json::to_string(names).unwrap_or_default().as_bytes());
        }
        match child.wait_with_output() {
            Ok(out) if out.status.success() => {
                serde_json::from_slice(&out.stdout).unwrap_or_default()
            }
            Ok(out) => {
                log::warn!("import resolver {program} exited with {}", out.status);
                BTreeMap::new()
            }
            Err(e) => {
                log::warn!("import resolver {program}: {e}");
                BTreeMap::new()
            }
        }
    }
}

/// Resolvers consulted in order; the first answer for a name wins.
impl ImportResolver for Vec<Box<dyn ImportResolver>> {
    fn resolve(&self, name: &str) -> Option<String> {
        self.iter().find_map(|r| r.resolve(name))
    }

    fn resolve_all(&self, names: &[String]) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        let mut pending: Vec<String> = names.to_vec();
        for resolver in self {
            if pending.is_empty() {
                break;
            }
            let found = resolver.resolve_all(&pending);
            pending.retain(|n| !found.contains_key(n));
            out.extend(found);
        }
        out
    }
}

/// Adds an import for every free identifier the resolver knows. Existing
/// imports keep their position; new ones follow, sorted by statement text.
/// Unresolved names are left for the type-check gate to reject.
pub fn predict_imports(func: SeedFunction, resolver: &dyn ImportResolver) -> SeedFunction {
    let free = python::free_identifiers_of_function(func.source());
    let already_bound: Vec<String> = func
        .imports
        .iter()
        .filter_map(|stmt| python::parse(stmt).map(|t| (t, stmt)))
        .flat_map(|(tree, stmt)| {
            let root = tree.root_node();
            let mut cursor = root.walk();
            root.named_children(&mut cursor)
                .flat_map(|n| python::import_bindings(n, stmt))
                .collect::<Vec<_>>()
        })
        .collect();
    let unbound: Vec<String> = free
        .into_iter()
        .filter(|n| !already_bound.contains(n))
        .collect();
    if unbound.is_empty() {
        return func;
    }
    let mut added: Vec<String> = resolver.resolve_all(&unbound).into_values().collect();
    added.sort();
    added.dedup();
    added.retain(|stmt| !func.imports.contains(stmt));
    if added.is_empty() {
        return func;
    }
    let mut imports = func.imports.clone();
    imports.extend(added);
    func.with_imports(imports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{extract_functions, SourceDocument};

    fn seed(src: &str) -> SeedFunction {
        extract_functions(&SourceDocument::new("t", "t.py", src))
            .functions
            .remove(0)
    }

    #[test]
    fn torch_reference_gains_import() {
        let f = seed("def z(n):\n    \"\"\"Zeros.\"\"\"\n    return torch.zeros(n)\n");
        assert!(f.imports.is_empty());
        let f = predict_imports(f, &ImportTable::builtin());
        assert_eq!(f.imports, vec!["import torch"]);
        assert!(f.rendered.starts_with("import torch\n\ndef z(n):"));
    }

    #[test]
    fn locally_bound_names_unchanged() {
        let f = seed("def g(xs):\n    \"\"\"Sum.\"\"\"\n    total = 0\n    for x in xs:\n        total += x\n    return total\n");
        let before = f.clone();
        assert_eq!(predict_imports(f, &ImportTable::builtin()), before);
    }

    #[test]
    fn two_modules_sorted_deterministically() {
        let f = seed("def h(p):\n    \"\"\"Load.\"\"\"\n    data = json.loads(Path(p).read_text())\n    return np.array(data)\n");
        let f = predict_imports(f, &ImportTable::builtin());
        assert_eq!(
            f.imports,
            vec![
                "from pathlib import Path",
                "import json",
                "import numpy as np"
            ]
        );
    }

    #[test]
    fn unresolvable_names_left_alone() {
        let f = seed("def k():\n    \"\"\"Mystery.\"\"\"\n    return frobnicate()\n");
        assert!(predict_imports(f, &ImportTable::builtin())
            .imports
            .is_empty());
    }

    #[test]
    fn custom_table_entries() {
        let mut table = ImportTable::builtin();
        table.extend(ImportTable {
            symbols: BTreeMap::from([("mylib.core".to_string(), vec!["frobnicate".to_string()])]),
            ..ImportTable::default()
        });
        let f = seed("def k():\n    \"\"\"Mystery.\"\"\"\n    return frobnicate()\n");
        assert_eq!(
            predict_imports(f, &table).imports,
            vec!["from mylib.core import frobnicate"]
        );
    }

    #[test]
    fn command_plugin_resolves() {
        let resolver = CommandResolver {
            command: vec![
                "sh".into(),
                "-c".into(),
                "cat >/dev/null; echo '{\"frobnicate\": \"from plug import frobnicate\"}'".into(),
            ],
        };
        let chain: Vec<Box<dyn ImportResolver>> =
            vec![Box::new(ImportTable::builtin()), Box::new(resolver)];
        let f = seed("def k():\n    \"\"\"Mystery.\"\"\"\n    return frobnicate(os.sep)\n");
        assert_eq!(
            predict_imports(f, &chain).imports,
            vec!["from plug import frobnicate", "import os"]
        );
    }
}
