//! Python syntax helpers on top of tree-sitter.

use std::cell::RefCell;
use std::collections::BTreeSet;
use tree_sitter::{Node, Parser, Tree};

thread_local! {
    static PARSER: RefCell<Parser> = RefCell::new({
        let mut parser = Parser::new();
        parser
            .set_language(&tree_sitter_python::LANGUAGE.into())
            .expect("python grammar loads");
        parser
    });
}

pub(crate) fn parse(source: &str) -> Option<Tree> {
    PARSER.with(|p| p.borrow_mut().parse(source, None))
}

/// True when `source` parses with no error or missing nodes.
pub(crate) fn parses_cleanly(source: &str) -> bool {
    parse(source).is_some_and(|t| !t.root_node().has_error())
}

pub(crate) fn text<'a>(node: Node<'_>, source: &'a str) -> &'a str {
    &source[node.byte_range()]
}

const BUILTINS: &[&str] = &[
    "ArithmeticError",
    "AssertionError",
    "AttributeError",
    "BaseException",
    "BlockingIOError",
    "BrokenPipeError",
    "BufferError",
    "BytesWarning",
    "ChildProcessError",
    "ConnectionAbortedError",
    "ConnectionError",
    "ConnectionRefusedError",
    "ConnectionResetError",
    "DeprecationWarning",
    "EOFError",
    "Ellipsis",
    "EncodingWarning",
    "EnvironmentError",
    "Exception",
    "False",
    "FileExistsError",
    "FileNotFoundError",
    "FloatingPointError",
    "FutureWarning",
    "GeneratorExit",
    "IOError",
    "ImportError",
    "ImportWarning",
    "IndentationError",
    "IndexError",
    "InterruptedError",
    "IsADirectoryError",
    "KeyError",
    "KeyboardInterrupt",
    "LookupError",
    "MemoryError",
    "ModuleNotFoundError",
    "NameError",
    "None",
    "NotADirectoryError",
    "NotImplemented",
    "NotImplementedError",
    "OSError",
    "OverflowError",
    "PendingDeprecationWarning",
    "PermissionError",
    "ProcessLookupError",
    "RecursionError",
    "ReferenceError",
    "ResourceWarning",
    "RuntimeError",
    "RuntimeWarning",
    "StopAsyncIteration",
    "StopIteration",
    "SyntaxError",
    "SyntaxWarning",
    "SystemError",
    "SystemExit",
    "TabError",
    "TimeoutError",
    "True",
    "TypeError",
    "UnboundLocalError",
    "UnicodeDecodeError",
    "UnicodeEncodeError",
    "UnicodeError",
    "UnicodeTranslateError",
    "UnicodeWarning",
    "UserWarning",
    "ValueError",
    "Warning",
    "ZeroDivisionError",
    "abs",
    "aiter",
    "all",
    "anext",
    "any",
    "ascii",
    "bin",
    "bool",
    "breakpoint",
    "bytearray",
    "bytes",
    "callable",
    "chr",
    "classmethod",
    "compile",
    "complex",
    "copyright",
    "credits",
    "delattr",
    "dict",
    "dir",
    "divmod",
    "enumerate",
    "eval",
    "exec",
    "exit",
    "filter",
    "float",
    "format",
    "frozenset",
    "getattr",
    "globals",
    "hasattr",
    "hash",
    "help",
    "hex",
    "id",
    "input",
    "int",
    "isinstance",
    "issubclass",
    "iter",
    "len",
    "license",
    "list",
    "locals",
    "map",
    "max",
    "memoryview",
    "min",
    "next",
    "object",
    "oct",
    "open",
    "ord",
    "pow",
    "print",
    "property",
    "quit",
    "range",
    "repr",
    "reversed",
    "round",
    "set",
    "setattr",
    "slice",
    "sorted",
    "staticmethod",
    "str",
    "sum",
    "super",
    "tuple",
    "type",
    "vars",
    "zip",
    "__name__",
    "__file__",
    "__doc__",
    "__builtins__",
];

pub(crate) fn is_builtin(name: &str) -> bool {
    BUILTINS.contains(&name)
}

/// Names an import statement binds in the enclosing scope.
pub(crate) fn import_bindings(node: Node<'_>, source: &str) -> Vec<String> {
    let mut names = Vec::new();
    let from_import = node.kind() == "import_from_statement";
    let mut cursor = node.walk();
    for (i, child) in node.children(&mut cursor).enumerate() {
        let field = node.field_name_for_child(i as u32);
        if field != Some("name") {
            continue;
        }
        match child.kind() {
            "dotted_name" => {
                let full = text(child, source);
                let bound = if from_import {
                    full.rsplit('.').next().unwrap_or(full)
                } else {
                    full.split('.').next().unwrap_or(full)
                };
                names.push(bound.to_string());
            }
            "aliased_import" => {
                if let Some(alias) = child.child_by_field_name("alias") {
                    names.push(text(alias, source).to_string());
                }
            }
            _ => {}
        }
    }
    names
}

fn is_import(node: Node<'_>) -> bool {
    matches!(
        node.kind(),
        "import_statement" | "import_from_statement" | "future_import_statement"
    )
}

fn collect_targets(node: Node<'_>, source: &str, out: &mut BTreeSet<String>) {
    match node.kind() {
        "identifier" => {
            out.insert(text(node, source).to_string());
        }
        "attribute" | "subscript" => {}
        _ => {
            let mut cursor = node.walk();
            for child in node.named_children(&mut cursor) {
                collect_targets(child, source, out);
            }
        }
    }
}

fn collect_parameters(node: Node<'_>, source: &str, out: &mut BTreeSet<String>) {
    let mut cursor = node.walk();
    for param in node.named_children(&mut cursor) {
        match param.kind() {
            "identifier" => {
                out.insert(text(param, source).to_string());
            }
            "default_parameter" | "typed_default_parameter" => {
                if let Some(name) = param.child_by_field_name("name") {
                    collect_targets(name, source, out);
                }
            }
            "typed_parameter" | "list_splat_pattern" | "dictionary_splat_pattern" => {
                let mut c = param.walk();
                for inner in param.named_children(&mut c) {
                    if inner.kind() == "identifier" {
                        out.insert(text(inner, source).to_string());
                    } else if matches!(
                        inner.kind(),
                        "list_splat_pattern" | "dictionary_splat_pattern"
                    ) {
                        collect_targets(inner, source, out);
                    }
                }
            }
            _ => {}
        }
    }
}

fn collect_bindings(node: Node<'_>, source: &str, out: &mut BTreeSet<String>) {
    match node.kind() {
        "parameters" | "lambda_parameters" => collect_parameters(node, source, out),
        "assignment" | "augmented_assignment" | "for_statement" | "for_in_clause" => {
            if let Some(left) = node.child_by_field_name("left") {
                collect_targets(left, source, out);
            }
        }
        "named_expression" => {
            if let Some(name) = node.child_by_field_name("name") {
                collect_targets(name, source, out);
            }
        }
        "as_pattern" => {
            if let Some(alias) = node.child_by_field_name("alias") {
                collect_targets(alias, source, out);
            }
        }
        "function_definition" | "class_definition" => {
            if let Some(name) = node.child_by_field_name("name") {
                out.insert(text(name, source).to_string());
            }
        }
        "import_statement" | "import_from_statement" => {
            out.extend(import_bindings(node, source));
            return;
        }
        _ => {}
    }
    let mut cursor = node.walk();
    for child in node.named_children(&mut cursor) {
        collect_bindings(child, source, out);
    }
}

fn collect_uses(node: Node<'_>, source: &str, out: &mut BTreeSet<String>) {
    if is_import(node) {
        return;
    }
    if node.kind() == "identifier" {
        out.insert(text(node, source).to_string());
        return;
    }
    let mut cursor = node.walk();
    for (i, child) in node.children(&mut cursor).enumerate() {
        let field = node.field_name_for_child(i as u32);
        let skip = matches!(
            (node.kind(), field),
            ("attribute", Some("attribute"))
                | ("keyword_argument", Some("name"))
                | ("function_definition", Some("name"))
                | ("class_definition", Some("name"))
        );
        if !skip {
            collect_uses(child, source, out);
        }
    }
}

/// Identifiers referenced inside `node` that are neither bound inside it nor
/// Python builtins, in sorted order.
pub(crate) fn free_identifiers(node: Node<'_>, source: &str) -> Vec<String> {
    let mut bound = BTreeSet::new();
    collect_bindings(node, source, &mut bound);
    let mut used = BTreeSet::new();
    collect_uses(node, source, &mut used);
    used.into_iter()
        .filter(|name| !bound.contains(name) && !is_builtin(name))
        .collect()
}

/// Free identifiers of the first top-level function in `source`.
pub(crate) fn free_identifiers_of_function(source: &str) -> Vec<String> {
    let Some(tree) = parse(source) else {
        return Vec::new();
    };
    let root = tree.root_node();
    let mut cursor = root.walk();
    let func = root
        .named_children(&mut cursor)
        .find(|n| n.kind() == "function_definition");
    match func {
        Some(f) => free_identifiers(f, source),
        None => Vec::new(),
    }
}
