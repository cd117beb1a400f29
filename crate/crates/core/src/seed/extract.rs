use std::sync::OnceLock;

use tree_sitter::{Query, QueryCursor, StreamingIterator};

use super::python::{self, text};
use super::{Origin, SeedFunction, SourceDocument};

/// Matches functions whose first body statement is a `"""`-delimited string.
const DOCSTRING_FUNCTION_QUERY: &str = r#"
(
    (function_definition
      name: (identifier)
      body: (block .
        (expression_statement
            (string
                (string_start) @docstring.start
                (string_content)
                (string_end) @docstring.end)))) @function.def
    (#eq? @docstring.start "\"\"\"")
    (#eq? @docstring.end "\"\"\"")
)
"#;

fn query() -> &'static Query {
    static QUERY: OnceLock<Query> = OnceLock::new();
    QUERY.get_or_init(|| {
        Query::new(
            &tree_sitter_python::LANGUAGE.into(),
            DOCSTRING_FUNCTION_QUERY,
        )
        .expect("docstring query compiles")
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    pub functions: Vec<SeedFunction>,
    /// Set when the document could not be parsed.
    pub diagnostic: Option<String>,
}

/// Extracts top-level functions carrying a `"""` docstring.
///
/// Module-level imports that bind a name the function references are carried
/// over into the seed's import list, in document order. Documents with syntax
/// errors yield nothing and a diagnostic.
pub fn extract_functions(doc: &SourceDocument) -> Extraction {
    let source = doc.content.as_str();
    if source.trim().is_empty() {
        return Extraction::default();
    }
    let Some(tree) = python::parse(source) else {
        return Extraction {
            functions: Vec::new(),
            diagnostic: Some(format!("{}: parser gave up", doc.doc_id)),
        };
    };
    let root = tree.root_node();
    if root.has_error() {
        return Extraction {
            functions: Vec::new(),
            diagnostic: Some(format!("{}: syntax error", doc.doc_id)),
        };
    }

    let mut module_imports = Vec::new();
    let mut cursor = root.walk();
    for child in root.named_children(&mut cursor) {
        if matches!(
            child.kind(),
            "import_statement" | "import_from_statement" | "future_import_statement"
        ) {
            module_imports.push((
                text(child, source).to_string(),
                python::import_bindings(child, source),
            ));
        }
    }

    let q = query();
    let def_idx = q
        .capture_index_for_name("function.def")
        .expect("capture exists");
    let start_idx = q
        .capture_index_for_name("docstring.start")
        .expect("capture exists");
    let end_idx = q
        .capture_index_for_name("docstring.end")
        .expect("capture exists");

    let mut functions = Vec::new();
    let mut qc = QueryCursor::new();
    let mut matches = qc.matches(q, root, source.as_bytes());
    while let Some(m) = matches.next() {
        let capture = |idx| m.captures().iter().find(|c| c.index == idx).map(|c| c.node);
        let (Some(func), Some(open), Some(close)) =
            (capture(def_idx), capture(start_idx), capture(end_idx))
        else {
            continue;
        };
        if func.parent().map(|p| p.kind()) != Some("module") {
            continue;
        }
        let Some(body) = func.child_by_field_name("body") else {
            continue;
        };
        let Some(doc_stmt) = body.named_child(0) else {
            continue;
        };

        let func_text = text(func, source);
        let signature = source[func.start_byte()..body.start_byte()]
            .trim_end()
            .to_string();
        let docstring = source[open.end_byte()..close.start_byte()].to_string();
        let rest = source[doc_stmt.end_byte()..func.end_byte()].to_string();

        let free = python::free_identifiers(func, source);
        let imports: Vec<String> = module_imports
            .iter()
            .filter(|(_, bound)| bound.iter().any(|b| free.contains(b)))
            .map(|(stmt, _)| stmt.clone())
            .collect();

        let seed = SeedFunction {
            seed_id: format!("{}#{:04}", doc.doc_id, functions.len()),
            imports: Vec::new(),
            signature,
            docstring,
            body: rest,
            rendered: format!("{func_text}\n"),
            origin: Origin {
                doc_id: doc.doc_id.clone(),
                start: func.start_byte(),
                end: func.end_byte(),
            },
        }
        .with_imports(imports);
        if python::parses_cleanly(&seed.rendered) {
            functions.push(seed);
        }
    }
    Extraction {
        functions,
        diagnostic: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const ONE_HOT: &str = r#"import os
import torch

def one_hot(y, num_dim=10):
    """
    One Hot Encoding, similar to `torch.eye(num_dim).index_select(dim=0, index=y)`
    :param y: N-dim tenser
    :param num_dim: do one-hot labeling from `0` to `num_dim-1`
    :return: shape = (batch_size, num_dim)
    """
    one_hot_y = torch.zeros(y.size(0), num_dim)
    if y.is_cuda:
        one_hot_y = one_hot_y.cuda()
    return one_hot_y.scatter_(1, y.view(-1, 1), 1.)
"#;

    fn doc(content: &str) -> SourceDocument {
        SourceDocument::new("d1", "d1.py", content)
    }

    #[test]
    fn listing_one_seed() {
        let out = extract_functions(&doc(ONE_HOT));
        assert_eq!(out.functions.len(), 1);
        let f = &out.functions[0];
        assert_eq!(f.imports, vec!["import torch"]);
        assert!(f.docstring.trim_start().starts_with("One Hot Encoding"));
        assert_eq!(f.signature, "def one_hot(y, num_dim=10):");
        assert!(f.body.trim_start().starts_with("one_hot_y = torch.zeros"));
        assert!(f.rendered.starts_with("import torch\n\ndef one_hot("));
        assert_eq!(
            &ONE_HOT[f.origin.start..f.origin.end],
            f.source().trim_end()
        );
    }

    #[test]
    fn empty_document() {
        assert!(extract_functions(&doc("")).functions.is_empty());
    }

    #[test]
    fn no_docstring_no_match() {
        assert!(extract_functions(&doc("def f(x):\n    return x\n"))
            .functions
            .is_empty());
    }

    #[test]
    fn nested_and_method_functions_excluded() {
        let src = "def outer():\n    def inner():\n        \"\"\"Doc.\"\"\"\n        return 1\n    return inner\n\nclass A:\n    def m(self):\n        \"\"\"Doc.\"\"\"\n        return 2\n";
        assert!(extract_functions(&doc(src)).functions.is_empty());
    }

    #[test]
    fn only_triple_double_quotes() {
        let src = "def a():\n    '''Single.'''\n    return 1\n\ndef b():\n    r\"\"\"Raw.\"\"\"\n    return 2\n\ndef c():\n    \"Plain.\"\n    return 3\n\ndef d():\n    \"\"\"Kept.\"\"\"\n    return 4\n";
        let out = extract_functions(&doc(src));
        let sigs: Vec<_> = out.functions.iter().map(|f| f.signature.as_str()).collect();
        assert_eq!(sigs, vec!["def d():"]);
    }

    #[test]
    fn docstring_must_be_first_statement() {
        let src = "def f():\n    x = 1\n    \"\"\"Late.\"\"\"\n    return x\n";
        assert!(extract_functions(&doc(src)).functions.is_empty());
    }

    #[test]
    fn syntax_error_gives_diagnostic() {
        let out = extract_functions(&doc("def f(:\n    \"\"\"x\"\"\"\n"));
        assert!(out.functions.is_empty());
        assert!(out.diagnostic.is_some());
    }

    #[test]
    fn seed_ids_are_ordinal_within_document() {
        let src = "def a():\n    \"\"\"A.\"\"\"\n    return 1\n\ndef b():\n    \"\"\"B.\"\"\"\n    return 2\n";
        let ids: Vec<_> = extract_functions(&doc(src))
            .functions
            .into_iter()
            .map(|f| f.seed_id)
            .collect();
        assert_eq!(ids, vec!["d1#0000", "d1#0001"]);
    }
}
