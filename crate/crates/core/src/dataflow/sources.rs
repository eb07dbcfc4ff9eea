//! Loader-call discovery.

use std::collections::HashMap;

use rustpython_parser::ast::{self, Constant, Expr, Stmt};

use super::parse::ParsedScript;
use super::walk;
use super::{DataSource, LoaderSet, SourceArgument};

/// Keyword names that carry the path for the supported loaders.
const PATH_KEYWORDS: &[&str] = &["filepath_or_buffer", "fname", "file", "path_or_buf", "fp"];

/// Every loader call in the script, in source order. Calls nested in
/// functions, comprehensions or lambdas are included.
pub fn find_data_sources(script: &ParsedScript, loaders: &LoaderSet) -> Vec<DataSource> {
    if !script.parse_ok {
        return Vec::new();
    }
    let bindings = binding_hints(script.statements());
    let mut out = Vec::new();
    walk::for_each_expr(script.statements(), &mut |expr| {
        let Expr::Call(call) = expr else { return };
        let Some((name, _)) = walk::callee_names(call, script.source()) else { return };
        if !loaders.contains(&name) || !is_read_call(&name, call) {
            return;
        }
        let start = call.range.start().to_u32();
        out.push(DataSource {
            variable: bindings.get(&start).cloned(),
            loader: name,
            argument: path_argument(call),
            location: script.locate(walk::callee_name_offset(call)),
            span: ParsedScript::span_of(call),
        });
    });
    out.sort_by_key(|s| (s.span.start, s.span.end));
    out
}

/// `open` is a loader only when opened for reading: no mode, or a literal
/// mode containing `r`.
fn is_read_call(name: &str, call: &ast::ExprCall) -> bool {
    if name != "open" {
        return true;
    }
    let mode = call.args.get(1).or_else(|| {
        call.keywords
            .iter()
            .find(|k| k.arg.as_ref().map(|a| a.as_str()) == Some("mode"))
            .map(|k| &k.value)
    });
    match mode {
        None => true,
        Some(e) => string_literal(e).is_some_and(|m| m.contains('r')),
    }
}

fn path_argument(call: &ast::ExprCall) -> SourceArgument {
    let arg = call.args.first().filter(|a| !matches!(a, Expr::Starred(_))).or_else(|| {
        call.keywords
            .iter()
            .find(|k| k.arg.as_ref().is_some_and(|a| PATH_KEYWORDS.contains(&a.as_str())))
            .map(|k| &k.value)
    });
    match arg.and_then(string_literal) {
        Some(s) => SourceArgument::Literal(s.to_string()),
        None => SourceArgument::NonLiteral,
    }
}

pub(crate) fn string_literal(expr: &Expr) -> Option<&str> {
    match expr {
        Expr::Constant(c) => match &c.value {
            Constant::Str(s) => Some(s),
            _ => None,
        },
        _ => None,
    }
}

/// Map from a call's start offset to the plain name its result is bound to.
pub(crate) fn binding_hints(body: &[Stmt]) -> HashMap<u32, String> {
    let mut hints = HashMap::new();
    let mut bind = |target: &Expr, value: &Expr| {
        if let (Expr::Name(n), Expr::Call(c)) = (target, value) {
            hints.entry(c.range.start().to_u32()).or_insert_with(|| n.id.to_string());
        }
    };
    let mut named: Vec<(&Expr, &Expr)> = Vec::new();
    walk::for_each_stmt(body, &mut |stmt| match stmt {
        Stmt::Assign(a) => {
            for target in &a.targets {
                pair_targets(target, &a.value, &mut named);
            }
        }
        Stmt::AnnAssign(a) => {
            if let Some(v) = &a.value {
                named.push((&a.target, v));
            }
        }
        Stmt::With(w) => with_pairs(&w.items, &mut named),
        Stmt::AsyncWith(w) => with_pairs(&w.items, &mut named),
        _ => {}
    });
    walk::for_each_expr(body, &mut |expr| {
        if let Expr::NamedExpr(n) = expr {
            named.push((&n.target, &n.value));
        }
    });
    for (t, v) in named {
        bind(t, v);
    }
    hints
}

fn pair_targets<'a>(target: &'a Expr, value: &'a Expr, out: &mut Vec<(&'a Expr, &'a Expr)>) {
    match (target, value) {
        (Expr::Tuple(t), Expr::Tuple(v)) if t.elts.len() == v.elts.len() => {
            for (a, b) in t.elts.iter().zip(&v.elts) {
                pair_targets(a, b, out);
            }
        }
        (Expr::List(t), Expr::List(v)) if t.elts.len() == v.elts.len() => {
            for (a, b) in t.elts.iter().zip(&v.elts) {
                pair_targets(a, b, out);
            }
        }
        _ => out.push((target, value)),
    }
}

fn with_pairs<'a>(items: &'a [ast::WithItem], out: &mut Vec<(&'a Expr, &'a Expr)>) {
    for item in items {
        if let Some(v) = &item.optional_vars {
            out.push((v, &item.context_expr));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataflow::{parse_script, AnalysisConfig, ScriptKind};

    fn sources(src: &str) -> Vec<DataSource> {
        let s = parse_script(src.as_bytes(), ScriptKind::Script);
        find_data_sources(&s, &AnalysisConfig::default().loaders)
    }

    #[test]
    fn qualified_and_bare_loaders() {
        let got = sources("import pandas as pd\ndf = pd.read_csv('a.csv')\nx = loadtxt(fname='b.txt')\n");
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].variable.as_deref(), Some("df"));
        assert_eq!(got[0].loader, "read_csv");
        assert_eq!(got[0].argument, SourceArgument::Literal("a.csv".into()));
        assert_eq!((got[0].location.line, got[0].location.column), (2, 8));
        assert_eq!(got[1].argument, SourceArgument::Literal("b.txt".into()));
    }

    #[test]
    fn open_modes() {
        let got = sources("a = open('r.txt')\nb = open('w.txt', 'w')\nc = open('x', mode='rb')\nd = open('y', m)\n");
        let vars: Vec<_> = got.iter().map(|s| s.variable.clone().unwrap()).collect();
        assert_eq!(vars, ["a", "c"]);
    }

    #[test]
    fn non_literal_and_unbound() {
        let got = sources("path = 'x'\nprint(read_csv(path))\n");
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].variable, None);
        assert_eq!(got[0].argument, SourceArgument::NonLiteral);
    }

    #[test]
    fn with_tuple_and_walrus_bindings() {
        let got = sources(
            "with open('f') as fh:\n    pass\na, b = read_csv('1'), read_json('2')\nif (d := loadtxt('3')) is not None:\n    pass\n",
        );
        let vars: Vec<_> = got.iter().map(|s| s.variable.clone()).collect();
        assert_eq!(vars, [Some("fh".into()), Some("a".into()), Some("b".into()), Some("d".into())]);
    }

    #[test]
    fn nested_and_comprehension_sources_found() {
        let got = sources("def f():\n    return read_csv('a')\nxs = [read_csv(p) for p in ps]\n");
        assert_eq!(got.len(), 2);
    }

    #[test]
    fn unparsable_yields_nothing() {
        assert!(sources("df = read_csv('a'\n").is_empty());
    }
}
