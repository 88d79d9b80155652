//! Source rewriting: wrap selected function bodies with runtime calls.
//!
//! All inserted text lands on the line of the body's opening brace or the
//! line of its closing brace, and the guard marker is a block comment at the
//! start of line 1, so line numbers in panic messages and compiler output
//! stay those of the original file.

use std::fmt::Write as _;

use syn::spanned::Spanned;
use syn::visit::Visit;

use super::index::{FnSite, FunctionLocator, ParsedSource};

pub const GUARD_PREFIX: &str = "/* @rtrace-guard plan=";

pub fn guard_marker(plan_digest: &str) -> String {
    format!("{GUARD_PREFIX}{plan_digest} */ ")
}

pub fn has_guard(text: &str) -> bool {
    text.trim_start_matches('\u{feff}').starts_with(GUARD_PREFIX)
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RewriteError {
    #[error("file already carries an instrumentation guard")]
    AlreadyInstrumented,
    #[error("cannot parse source: {0}")]
    Parse(String),
    #[error("no function item at the recorded span of {0}; the source changed since indexing")]
    StaleLocator(String),
    #[error("rewritten source does not parse: {0}")]
    Reparse(String),
}

/// Rewrite `text`, wrapping every function in `targets`.
pub fn rewrite_source(
    text: &str,
    targets: &[&FunctionLocator],
    sink_var: &str,
    plan_digest: &str,
) -> Result<String, RewriteError> {
    if has_guard(text) {
        return Err(RewriteError::AlreadyInstrumented);
    }
    let parsed = ParsedSource::parse(text).map_err(|e| RewriteError::Parse(e.to_string()))?;
    let sites = parsed.sites();
    let mut edits: Vec<Edit> = Vec::new();
    for target in targets {
        let site = sites
            .iter()
            .find(|s| parsed.offset(s.start) == target.span.start && parsed.offset(s.end) == target.span.end)
            .ok_or_else(|| RewriteError::StaleLocator(target.qualified_path.clone()))?;
        edits.extend(wrap(&parsed, site, &target.qualified_path, sink_var));
    }
    // Inserting back to front keeps earlier offsets valid; at a shared
    // offset (an empty body) the closing text goes in first.
    edits.sort_by_key(|e| std::cmp::Reverse((e.start, e.order)));
    let mut out = text.to_owned();
    for e in edits {
        out.replace_range(e.start..e.end, &e.text);
    }
    let head = if out.starts_with('\u{feff}') { 3 } else { 0 };
    out.insert_str(head, &guard_marker(plan_digest));
    syn::parse_file(&out[head..]).map_err(|e| {
        let lc = e.span().start();
        RewriteError::Reparse(format!("{}:{}: {e}", lc.line, lc.column + 1))
    })?;
    Ok(out)
}

fn wrap(parsed: &ParsedSource<'_>, site: &FnSite<'_>, qualified_path: &str, sink_var: &str) -> Vec<Edit> {
    let braces = site.block.brace_token.span;
    let open = match site.inner_attrs_end() {
        Some(end) => parsed.offset(end),
        None => parsed.offset(braces.open().end()),
    };
    let close = parsed.offset(braces.close().start());
    let text =
        |s: proc_macro2::Span| -> String { parsed.text[parsed.offset(s.start())..parsed.offset(s.end())].to_owned() };

    let mut edits = Vec::new();
    let mut captures = Vec::new();
    let mut bound = Vec::new();
    for (i, input) in site.sig.inputs.iter().enumerate() {
        match input {
            syn::FnArg::Receiver(_) => {
                captures.push(capture_expr("self"));
                bound.push("self".to_owned());
            }
            syn::FnArg::Typed(pt) if matches!(&*pt.pat, syn::Pat::Wild(_)) => {
                // A wildcard parameter still lives until the function
                // returns; naming it lets the closure own it like any other.
                let name = format!("__rtrace_arg{i}");
                let span = pt.pat.span();
                edits.push(Edit {
                    start: parsed.offset(span.start()),
                    end: parsed.offset(span.end()),
                    order: 0,
                    text: name.clone(),
                });
                captures.push(capture_expr(&name));
                bound.push(name);
            }
            syn::FnArg::Typed(pt) => {
                let mut names = Bindings::default();
                names.visit_pat(&pt.pat);
                match names.0.as_slice() {
                    [] => captures.push(format!(
                        "::rtrace_rt::CapturedValue::placeholder({:?})",
                        text(pt.ty.span())
                    )),
                    [one] if matches!(&*pt.pat, syn::Pat::Ident(_)) => captures.push(capture_expr(one)),
                    many => {
                        let tuple: Vec<String> = many.iter().map(|n| format!("&{n}")).collect();
                        captures.push(capture_expr(&format!("({},)", tuple.join(", "))));
                    }
                }
                bound.extend(names.0);
            }
        }
    }

    let mut head = String::new();
    write!(
        head,
        " let __rtrace_call = ::rtrace_rt::enter({sink_var:?}, {qualified_path:?}, |__rtrace_cap| ::rtrace_rt::__private::vec![{}]);",
        captures.join(", ")
    )
    .unwrap();

    let ret_ty = match &site.sig.output {
        syn::ReturnType::Default => Some("()".to_owned()),
        syn::ReturnType::Type(_, ty) => {
            if matches!(**ty, syn::Type::Never(_)) {
                // A diverging body never yields a value: the guard records
                // the unwind, and the body stays untouched.
                edits.push(Edit::insert(open, 0, head));
                return edits;
            }
            let mut probe = ImplTraitProbe(false);
            probe.visit_type(ty);
            (!probe.0).then(|| text(ty.span()))
        }
    };
    let turbofish = ret_ty.map(|t| format!("::<{t}, _>")).unwrap_or_default();
    write!(head, " let __rtrace_ret = ::rtrace_rt::call_once{turbofish}(move || {{").unwrap();
    if !bound.is_empty() {
        // Mentioning parameters in reverse order moves them into the closure
        // so that they drop in the same order as they would at function exit.
        let refs: Vec<String> = bound.iter().rev().map(|n| format!("&{n}")).collect();
        write!(head, " let _ = ({},);", refs.join(", ")).unwrap();
    }
    head.push(' ');
    let tail =
        " }); __rtrace_call.exit(|__rtrace_cap| ::rtrace_rt::capture!(__rtrace_ret, __rtrace_cap)); __rtrace_ret "
            .to_owned();
    edits.push(Edit::insert(open, 0, head));
    edits.push(Edit::insert(close, 1, tail));
    edits
}

/// Replacement of `start..end`; `order` breaks ties between edits at the
/// same offset, higher first.
struct Edit {
    start: usize,
    end: usize,
    order: u8,
    text: String,
}

impl Edit {
    fn insert(at: usize, order: u8, text: String) -> Self {
        Edit {
            start: at,
            end: at,
            order,
            text,
        }
    }
}

fn capture_expr(expr: &str) -> String {
    format!("::rtrace_rt::capture!({expr}, __rtrace_cap)")
}

#[derive(Default)]
struct Bindings(Vec<String>);

impl<'ast> Visit<'ast> for Bindings {
    fn visit_pat_ident(&mut self, p: &'ast syn::PatIdent) {
        self.0.push(p.ident.to_string());
        syn::visit::visit_pat_ident(self, p);
    }

    fn visit_pat_or(&mut self, p: &'ast syn::PatOr) {
        // Every alternative binds the same names.
        if let Some(first) = p.cases.first() {
            self.visit_pat(first);
        }
    }

    fn visit_type(&mut self, _: &'ast syn::Type) {}

    fn visit_expr(&mut self, _: &'ast syn::Expr) {}
}

struct ImplTraitProbe(bool);

impl<'ast> Visit<'ast> for ImplTraitProbe {
    fn visit_type_impl_trait(&mut self, _: &'ast syn::TypeImplTrait) {
        self.0 = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instrument::index::{FunctionKind, ParsedSource};

    fn locate(text: &str, name: &str) -> FunctionLocator {
        let parsed = ParsedSource::parse(text).unwrap();
        let site = parsed
            .sites()
            .into_iter()
            .find(|s| s.path.last().unwrap() == name)
            .unwrap();
        FunctionLocator {
            qualified_path: format!("toy::{}", site.path.join("::")),
            file: "lib.rs".into(),
            span: parsed.offset(site.start)..parsed.offset(site.end),
            kind: site.kind,
            trait_default: site.trait_default,
            line: site.start.line,
        }
    }

    fn rewrite(text: &str, names: &[&str]) -> String {
        let locs: Vec<FunctionLocator> = names.iter().map(|n| locate(text, n)).collect();
        let refs: Vec<&FunctionLocator> = locs.iter().collect();
        rewrite_source(text, &refs, "RTRACE_SINK", "abc").unwrap()
    }

    #[test]
    fn wraps_body_and_keeps_lines() {
        let text = "pub fn add(a: i32, b: i32) -> i32 {\n    a + b\n}\n\nfn keep() {}\n";
        let out = rewrite(text, &["add"]);
        assert!(has_guard(&out));
        assert_eq!(out.lines().count(), text.lines().count());
        assert!(out.contains("\"toy::add\""));
        assert!(out.contains("call_once::<i32, _>(move || { let _ = (&b, &a,);"));
        assert!(out.contains("fn keep() {}"));
        syn::parse_file(&out).unwrap();
    }

    #[test]
    fn generic_signature_is_untouched() {
        let text = "pub fn id<T: Clone>(x: T) -> T where T: Default {\n    x.clone()\n}\n";
        let out = rewrite(text, &["id"]);
        assert!(out.contains("pub fn id<T: Clone>(x: T) -> T where T: Default {"));
        assert!(out.contains("call_once::<T, _>"));
    }

    #[test]
    fn receivers_patterns_and_wildcards() {
        let text =
            "struct S;\nimpl S {\n    fn m(&mut self, (a, b): (u8, u8), _: Vec<u8>, (): ()) -> &mut Self { self }\n}\n";
        let out = rewrite(text, &["m"]);
        assert!(out.contains("fn m(&mut self, (a, b): (u8, u8), __rtrace_arg2: Vec<u8>, (): ())"));
        assert!(out.contains("capture!(self, __rtrace_cap)"));
        assert!(out.contains("capture!((&a, &b,), __rtrace_cap)"));
        assert!(out.contains("capture!(__rtrace_arg2, __rtrace_cap)"));
        assert!(out.contains("placeholder(\"()\")"));
        assert!(out.contains("let _ = (&__rtrace_arg2, &b, &a, &self,);"));
        assert!(out.contains("call_once::<&mut Self, _>"));
    }

    #[test]
    fn impl_trait_and_never_returns() {
        let text = "fn it() -> impl Iterator<Item = u8> { 0..3 }\nfn fail() -> ! { panic!() }\n";
        let out = rewrite(text, &["it", "fail"]);
        assert!(out.contains("call_once(move ||"));
        let fail_line = out.lines().nth(1).unwrap();
        assert!(fail_line.contains("enter("));
        assert!(!fail_line.contains("call_once"));
        assert!(fail_line.ends_with("panic!() }"));
    }

    #[test]
    fn inner_attributes_stay_first() {
        let text = "fn f() {\n    #![allow(unused)]\n    let x = 1;\n}\n";
        let out = rewrite(text, &["f"]);
        let attr = out.find("#![allow(unused)]").unwrap();
        assert!(attr < out.find("__rtrace_call").unwrap());
        syn::parse_file(&out).unwrap();
    }

    #[test]
    fn second_rewrite_is_rejected() {
        let text = "fn f() {}\n";
        let out = rewrite(text, &["f"]);
        let loc = locate(text, "f");
        assert_eq!(
            rewrite_source(&out, &[&loc], "RTRACE_SINK", "abc"),
            Err(RewriteError::AlreadyInstrumented)
        );
    }

    #[test]
    fn stale_span_is_reported() {
        let text = "fn f() {}\n";
        let mut loc = locate(text, "f");
        loc.span.start += 1;
        assert!(matches!(
            rewrite_source(text, &[&loc], "S", "d"),
            Err(RewriteError::StaleLocator(_))
        ));
    }

    #[test]
    fn trait_default_method() {
        let text = "trait T {\n    fn d(&self) -> u8 { 1 }\n}\n";
        let loc = locate(text, "d");
        assert_eq!(loc.kind, FunctionKind::TraitMethod);
        let out = rewrite_source(text, &[&loc], "S", "d").unwrap();
        assert!(out.contains("\"toy::T::d\""));
    }

    #[test]
    fn multibyte_text_before_targets() {
        let text = "/// héllo wörld\nfn f(s: &str) -> usize { \"ünï\".len() + s.len() }\n";
        let out = rewrite(text, &["f"]);
        assert!(out.contains("\"ünï\".len() + s.len()  }); __rtrace_call.exit"));
    }
}
