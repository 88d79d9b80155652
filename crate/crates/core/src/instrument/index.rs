//! Function discovery over a Cargo source tree.

use std::collections::BTreeMap;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use proc_macro2::{LineColumn, Span};
use serde::{Deserialize, Serialize};
use syn::spanned::Spanned;
use syn::visit::Visit;

use crate::manifest::{self, ManifestModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionKind {
    FreeFunction,
    InherentMethod,
    TraitMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    Closure,
    ExistingConflictingMacro,
    TestFunction,
    AsyncFunction,
    ConstFunction,
    NotFoundInScope,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionLocator {
    pub qualified_path: String,
    pub file: PathBuf,
    /// Byte range of the whole item, outer attributes included.
    pub span: Range<usize>,
    pub kind: FunctionKind,
    /// Default body of a trait method.
    #[serde(default)]
    pub trait_default: bool,
    pub line: usize,
}

impl FunctionLocator {
    pub fn short_name(&self) -> &str {
        self.qualified_path.rsplit("::").next().unwrap_or(&self.qualified_path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedFunction {
    pub qualified_path: String,
    pub file: PathBuf,
    pub line: usize,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostic {
    pub file: PathBuf,
    pub message: String,
}

/// A crate root to index: its import name and the package directory.
#[derive(Debug, Clone)]
pub struct SourcePackage {
    pub crate_name: String,
    pub dir: PathBuf,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FunctionIndex {
    pub functions: Vec<FunctionLocator>,
    pub excluded: Vec<ExcludedFunction>,
    pub diagnostics: Vec<ParseDiagnostic>,
    /// Short and qualified names to positions in `functions`.
    #[serde(skip)]
    names: BTreeMap<String, Vec<usize>>,
}

impl FunctionIndex {
    /// Exact name lookup: a short name or a full qualified path.
    pub fn get(&self, name: &str) -> Vec<&FunctionLocator> {
        self.names
            .get(name)
            .map(|ix| ix.iter().map(|&i| &self.functions[i]).collect())
            .unwrap_or_default()
    }

    /// Candidates for a requested name. The request matches any qualified
    /// path ending in the same segments; a leading `crate` segment anchors
    /// the rest at a crate root.
    pub fn lookup(&self, request: &str) -> Vec<&FunctionLocator> {
        self.functions
            .iter()
            .filter(|f| path_matches(&f.qualified_path, request))
            .collect()
    }

    pub fn lookup_excluded(&self, request: &str) -> Vec<&ExcludedFunction> {
        self.excluded
            .iter()
            .filter(|f| path_matches(&f.qualified_path, request))
            .collect()
    }

    pub fn merge(&mut self, other: FunctionIndex) {
        self.functions.extend(other.functions);
        self.excluded.extend(other.excluded);
        self.diagnostics.extend(other.diagnostics);
        self.rebuild_names();
    }

    fn push(&mut self, f: FunctionLocator) {
        self.functions.push(f);
    }

    fn rebuild_names(&mut self) {
        self.names.clear();
        for (i, f) in self.functions.iter().enumerate() {
            let mut keys = vec![f.short_name().to_owned(), f.qualified_path.clone()];
            if let Some((_, rest)) = f.qualified_path.split_once("::") {
                keys.push(format!("crate::{rest}"));
            }
            for k in keys {
                let slot = self.names.entry(k).or_default();
                if !slot.contains(&i) {
                    slot.push(i);
                }
            }
        }
    }
}

fn path_matches(qualified: &str, request: &str) -> bool {
    let have: Vec<&str> = qualified.split("::").collect();
    let want: Vec<&str> = request.trim().trim_start_matches("::").split("::").collect();
    match want.split_first() {
        Some((&"crate", rest)) => have.len() == rest.len() + 1 && have[1..] == *rest,
        _ => have.len() >= want.len() && have[have.len() - want.len()..] == *want,
    }
}

/// Index every package reachable from `source_root`: the package itself
/// and any workspace members. A directory without a manifest is indexed as
/// a bare source tree under the crate name `crate`.
pub fn index_functions(source_root: &Path) -> std::io::Result<FunctionIndex> {
    index_packages(&discover_packages(source_root))
}

pub fn discover_packages(root: &Path) -> Vec<SourcePackage> {
    let manifest_path = root.join(manifest::MANIFEST_FILE);
    let Ok(model) = manifest::parse_manifest(&manifest_path) else {
        return vec![SourcePackage {
            crate_name: "crate".to_owned(),
            dir: root.to_owned(),
        }];
    };
    let mut out = Vec::new();
    push_package(&model, &mut out);
    for member in &model.members {
        let path = root.join(member).join(manifest::MANIFEST_FILE);
        if let Ok(m) = manifest::parse_manifest(&path) {
            push_package(&m, &mut out);
        }
    }
    out
}

fn push_package(m: &ManifestModel, out: &mut Vec<SourcePackage>) {
    if let Some(name) = m.crate_ident() {
        out.push(SourcePackage {
            crate_name: name,
            dir: m.package_path.clone(),
        });
    }
}

pub fn index_packages(packages: &[SourcePackage]) -> std::io::Result<FunctionIndex> {
    let mut index = FunctionIndex::default();
    for pkg in packages {
        for (file, module) in crate_files(pkg)? {
            index_file(&file, &module, &mut index);
        }
    }
    index.rebuild_names();
    Ok(index)
}

/// Source files of a package with the module path each one defines.
fn crate_files(pkg: &SourcePackage) -> std::io::Result<Vec<(PathBuf, Vec<String>)>> {
    let mut out = Vec::new();
    let src = pkg.dir.join("src");
    let dirs = if src.is_dir() {
        vec![(src, None), (pkg.dir.join("tests"), Some(()))]
    } else {
        vec![(pkg.dir.clone(), None)]
    };
    for (dir, integration) in dirs {
        if !dir.is_dir() {
            continue;
        }
        let walker = walkdir::WalkDir::new(&dir)
            .sort_by_file_name()
            .into_iter()
            .filter_entry(|e| {
                let name = e.file_name().to_string_lossy();
                e.depth() == 0 || !(name.starts_with('.') || name == "target")
            });
        for entry in walker {
            let entry = entry.map_err(std::io::Error::other)?;
            let path = entry.path();
            if !entry.file_type().is_file() || path.extension().is_none_or(|e| e != "rs") {
                continue;
            }
            let rel = path.strip_prefix(&dir).unwrap_or(path);
            let module = if integration.is_some() {
                integration_module(rel)
            } else {
                module_path(&pkg.crate_name, rel)
            };
            out.push((path.to_owned(), module));
        }
    }
    Ok(out)
}

fn segments(rel: &Path) -> Vec<String> {
    rel.with_extension("")
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect()
}

fn module_path(crate_name: &str, rel: &Path) -> Vec<String> {
    let mut parts = segments(rel);
    if parts.first().map(String::as_str) == Some("bin") && parts.len() >= 2 {
        parts.remove(0);
        if parts.last().map(String::as_str) == Some("main") && parts.len() > 1 {
            parts.pop();
        }
        return parts;
    }
    if matches!(parts.last().map(String::as_str), Some("lib" | "main" | "mod")) {
        parts.pop();
    }
    let mut out = vec![crate_name.to_owned()];
    out.extend(parts);
    out
}

fn integration_module(rel: &Path) -> Vec<String> {
    let mut parts = segments(rel);
    if matches!(parts.last().map(String::as_str), Some("main" | "mod")) && parts.len() > 1 {
        parts.pop();
    }
    parts
}

fn index_file(file: &Path, module: &[String], index: &mut FunctionIndex) {
    let text = match fs::read_to_string(file) {
        Ok(t) => t,
        Err(e) => {
            index.diagnostics.push(ParseDiagnostic {
                file: file.to_owned(),
                message: e.to_string(),
            });
            return;
        }
    };
    let parsed = match ParsedSource::parse(&text) {
        Ok(p) => p,
        Err(e) => {
            index.diagnostics.push(ParseDiagnostic {
                file: file.to_owned(),
                message: e.to_string(),
            });
            return;
        }
    };
    let prefix = module.join("::");
    let qualify = |rel: &[String]| {
        if prefix.is_empty() {
            rel.join("::")
        } else {
            format!("{prefix}::{}", rel.join("::"))
        }
    };
    for site in parsed.sites() {
        let path = qualify(&site.path);
        let line = site.start.line;
        for closure in &site.closures {
            let mut p = site.path.clone();
            p.push(closure.clone());
            index.excluded.push(ExcludedFunction {
                qualified_path: qualify(&p),
                file: file.to_owned(),
                line,
                reason: ExclusionReason::Closure,
            });
        }
        if let Some(reason) = site.exclusion() {
            index.excluded.push(ExcludedFunction {
                qualified_path: path,
                file: file.to_owned(),
                line,
                reason,
            });
            continue;
        }
        index.push(FunctionLocator {
            qualified_path: path,
            file: file.to_owned(),
            span: parsed.offset(site.start)..parsed.offset(site.end),
            kind: site.kind,
            trait_default: site.trait_default,
            line,
        });
    }
    for name in parsed.const_closures() {
        index.excluded.push(ExcludedFunction {
            qualified_path: qualify(&[name.0]),
            file: file.to_owned(),
            line: name.1,
            reason: ExclusionReason::Closure,
        });
    }
}

/// A parsed source file plus the byte offsets of its lines.
pub(crate) struct ParsedSource<'t> {
    pub text: &'t str,
    pub file: syn::File,
    line_starts: Vec<usize>,
    bom: usize,
}

impl<'t> ParsedSource<'t> {
    pub fn parse(text: &'t str) -> syn::Result<Self> {
        let bom = if text.starts_with('\u{feff}') { 3 } else { 0 };
        let body = &text[bom..];
        let file = syn::parse_file(body)?;
        let mut line_starts = vec![0];
        line_starts.extend(body.match_indices('\n').map(|(i, _)| i + 1));
        Ok(ParsedSource {
            text,
            file,
            line_starts,
            bom,
        })
    }

    /// Byte offset in the full text of a line/column position.
    pub fn offset(&self, lc: LineColumn) -> usize {
        let body = &self.text[self.bom..];
        let start = self
            .line_starts
            .get(lc.line.saturating_sub(1))
            .copied()
            .unwrap_or(body.len());
        let line = &body[start..];
        let within = line.char_indices().nth(lc.column).map(|(i, _)| i).unwrap_or(line.len());
        self.bom + start + within
    }

    pub fn sites(&self) -> Vec<FnSite<'_>> {
        let mut collector = SiteCollector {
            sites: Vec::new(),
            path: Vec::new(),
            in_test: false,
            conflicting: false,
        };
        collector.items(&self.file.items);
        collector.sites
    }

    fn const_closures(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        for item in &self.file.items {
            let (ident, expr) = match item {
                syn::Item::Const(c) => (&c.ident, &*c.expr),
                syn::Item::Static(s) => (&s.ident, &*s.expr),
                _ => continue,
            };
            if matches!(expr, syn::Expr::Closure(_)) {
                out.push((ident.to_string(), ident.span().start().line));
            }
        }
        out
    }
}

/// One function item with a body, as found in a parsed file.
pub(crate) struct FnSite<'a> {
    /// Inline modules, the impl or trait name, then the function name.
    pub path: Vec<String>,
    pub kind: FunctionKind,
    pub trait_default: bool,
    pub attrs: &'a [syn::Attribute],
    pub sig: &'a syn::Signature,
    pub block: &'a syn::Block,
    pub start: LineColumn,
    pub end: LineColumn,
    pub in_test: bool,
    pub conflicting: bool,
    pub closures: Vec<String>,
}

impl FnSite<'_> {
    pub fn exclusion(&self) -> Option<ExclusionReason> {
        let outer: Vec<&syn::Attribute> = self
            .attrs
            .iter()
            .filter(|a| matches!(a.style, syn::AttrStyle::Outer))
            .collect();
        if self.in_test || outer.iter().any(|a| is_test_attr(a)) {
            Some(ExclusionReason::TestFunction)
        } else if self.conflicting || outer.iter().any(|a| !is_inert_attr(a)) {
            Some(ExclusionReason::ExistingConflictingMacro)
        } else if self.sig.asyncness.is_some() {
            Some(ExclusionReason::AsyncFunction)
        } else if self.sig.constness.is_some() || self.sig.variadic.is_some() {
            Some(ExclusionReason::ConstFunction)
        } else {
            None
        }
    }

    pub fn inner_attrs_end(&self) -> Option<LineColumn> {
        self.attrs
            .iter()
            .filter(|a| matches!(a.style, syn::AttrStyle::Inner(_)))
            .map(|a| a.span().end())
            .max_by_key(|lc| (lc.line, lc.column))
    }
}

struct SiteCollector<'a> {
    sites: Vec<FnSite<'a>>,
    path: Vec<String>,
    in_test: bool,
    conflicting: bool,
}

impl<'a> SiteCollector<'a> {
    fn items(&mut self, items: &'a [syn::Item]) {
        for item in items {
            self.item(item);
        }
    }

    fn item(&mut self, item: &'a syn::Item) {
        match item {
            syn::Item::Fn(f) => {
                let span = f.span();
                self.site(
                    f.sig.ident.to_string(),
                    FunctionKind::FreeFunction,
                    false,
                    &f.attrs,
                    &f.sig,
                    &f.block,
                    span,
                    self.in_test,
                    self.conflicting,
                );
            }
            syn::Item::Impl(imp) => {
                let in_test = self.in_test || imp.attrs.iter().any(is_test_attr);
                let conflicting = self.conflicting || imp.attrs.iter().any(|a| !is_inert_attr(a));
                let kind = if imp.trait_.is_some() {
                    FunctionKind::TraitMethod
                } else {
                    FunctionKind::InherentMethod
                };
                self.path.push(type_name(&imp.self_ty));
                for ii in &imp.items {
                    if let syn::ImplItem::Fn(m) = ii {
                        self.site(
                            m.sig.ident.to_string(),
                            kind,
                            false,
                            &m.attrs,
                            &m.sig,
                            &m.block,
                            m.span(),
                            in_test,
                            conflicting,
                        );
                    }
                }
                self.path.pop();
            }
            syn::Item::Trait(t) => {
                let in_test = self.in_test || t.attrs.iter().any(is_test_attr);
                let conflicting = self.conflicting || t.attrs.iter().any(|a| !is_inert_attr(a));
                self.path.push(t.ident.to_string());
                for ti in &t.items {
                    if let syn::TraitItem::Fn(m) = ti {
                        if let Some(block) = &m.default {
                            self.site(
                                m.sig.ident.to_string(),
                                FunctionKind::TraitMethod,
                                true,
                                &m.attrs,
                                &m.sig,
                                block,
                                m.span(),
                                in_test,
                                conflicting,
                            );
                        }
                    }
                }
                self.path.pop();
            }
            syn::Item::Mod(m) => {
                if let Some((_, items)) = &m.content {
                    let saved = (self.in_test, self.conflicting);
                    self.in_test |= m.attrs.iter().any(is_test_attr);
                    self.conflicting |= m.attrs.iter().any(|a| !is_inert_attr(a));
                    self.path.push(m.ident.to_string());
                    self.items(items);
                    self.path.pop();
                    (self.in_test, self.conflicting) = saved;
                }
            }
            _ => {}
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn site(
        &mut self,
        name: String,
        kind: FunctionKind,
        trait_default: bool,
        attrs: &'a [syn::Attribute],
        sig: &'a syn::Signature,
        block: &'a syn::Block,
        span: Span,
        in_test: bool,
        conflicting: bool,
    ) {
        let mut path = self.path.clone();
        path.push(name);
        let mut closures = ClosureFinder::default();
        closures.visit_block(block);
        self.sites.push(FnSite {
            path,
            kind,
            trait_default,
            attrs,
            sig,
            block,
            start: span.start(),
            end: span.end(),
            in_test,
            conflicting,
            closures: closures.names,
        });
    }
}

#[derive(Default)]
struct ClosureFinder {
    names: Vec<String>,
}

impl<'ast> Visit<'ast> for ClosureFinder {
    fn visit_local(&mut self, local: &'ast syn::Local) {
        if let (syn::Pat::Ident(p), Some(init)) = (&local.pat, &local.init) {
            if matches!(&*init.expr, syn::Expr::Closure(_)) {
                self.names.push(p.ident.to_string());
            }
        }
        syn::visit::visit_local(self, local);
    }

    // Items nested in a body are separate functions and are not indexed.
    fn visit_item(&mut self, _: &'ast syn::Item) {}
}

fn type_name(ty: &syn::Type) -> String {
    match ty {
        syn::Type::Path(p) => p.path.segments.last().map(|s| s.ident.to_string()).unwrap_or_default(),
        syn::Type::Reference(r) => type_name(&r.elem),
        syn::Type::Paren(p) => type_name(&p.elem),
        syn::Type::Group(g) => type_name(&g.elem),
        other => quote_compact(other),
    }
}

fn quote_compact(ty: &syn::Type) -> String {
    use quote::ToTokens;
    ty.to_token_stream().to_string().replace(' ', "")
}

fn attr_name(attr: &syn::Attribute) -> Vec<String> {
    attr.path().segments.iter().map(|s| s.ident.to_string()).collect()
}

fn is_test_attr(attr: &syn::Attribute) -> bool {
    let name = attr_name(attr);
    let last = name.last().map(String::as_str).unwrap_or("");
    if matches!(
        last,
        "test" | "bench" | "rstest" | "test_case" | "quickcheck" | "proptest"
    ) {
        return true;
    }
    if name == ["cfg"] {
        if let syn::Meta::List(list) = &attr.meta {
            return cfg_requires_test(&list.tokens.to_string());
        }
    }
    false
}

/// `cfg(test)`, `cfg(all(test, ..))`; never `cfg(not(test))`.
fn cfg_requires_test(tokens: &str) -> bool {
    let compact = tokens.replace(' ', "");
    compact == "test"
        || (compact.starts_with("all(")
            && compact[4..compact.len().saturating_sub(1)]
                .split(',')
                .any(|p| p == "test"))
}

/// Attributes that leave a function's body alone. Anything else may be a
/// procedural macro that rewrites the function, or, for `track_caller`,
/// changes what an inserted closure would observe.
fn is_inert_attr(attr: &syn::Attribute) -> bool {
    let name = attr_name(attr);
    let first = name.first().map(String::as_str).unwrap_or("");
    if matches!(first, "rustfmt" | "clippy" | "rustdoc") {
        return true;
    }
    name.len() == 1
        && matches!(
            first,
            "doc"
                | "allow"
                | "warn"
                | "deny"
                | "forbid"
                | "expect"
                | "inline"
                | "cold"
                | "must_use"
                | "deprecated"
                | "cfg"
                | "cfg_attr"
                | "no_mangle"
                | "export_name"
                | "link_section"
                | "target_feature"
                | "optimize"
                | "coverage"
                | "automatically_derived"
                | "instruction_set"
        )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn index_text(files: &[(&str, &str)]) -> (tempfile::TempDir, FunctionIndex) {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("Cargo.toml"), "[package]\nname = \"toy\"\n").unwrap();
        for (rel, text) in files {
            let p = dir.path().join(rel);
            fs::create_dir_all(p.parent().unwrap()).unwrap();
            fs::write(p, text).unwrap();
        }
        let index = index_functions(dir.path()).unwrap();
        (dir, index)
    }

    #[test]
    fn free_function_under_short_and_qualified_names() {
        let (_d, index) = index_text(&[("src/lib.rs", "fn add(a: i32, b: i32) -> i32 { a + b }\n")]);
        assert_eq!(index.functions.len(), 1);
        let f = &index.get("add")[0];
        assert_eq!(f.kind, FunctionKind::FreeFunction);
        assert_eq!(f.qualified_path, "toy::add");
        assert_eq!(index.get("toy::add").len(), 1);
        assert_eq!(index.get("crate::add").len(), 1);
    }

    #[test]
    fn span_covers_exactly_one_function() {
        let text = "use std::fmt;\n\n/// Adds.\n#[inline]\npub fn add(a: i32, b: i32) -> i32 {\n    a + b\n}\n\nfn other() {}\n";
        let (_d, index) = index_text(&[("src/lib.rs", text)]);
        let f = index.get("add")[0];
        let slice = &text[f.span.clone()];
        assert!(slice.starts_with("/// Adds."));
        assert!(slice.ends_with('}'));
        let reparsed: syn::File = syn::parse_str(slice).unwrap();
        assert_eq!(reparsed.items.len(), 1);
        assert!(matches!(reparsed.items[0], syn::Item::Fn(_)));
        assert_eq!(f.line, 3);
    }

    #[test]
    fn module_paths_follow_file_layout() {
        let (_d, index) = index_text(&[
            ("src/lib.rs", "mod output;\n"),
            ("src/output/mod.rs", "pub mod usage;\n"),
            (
                "src/output/usage.rs",
                "pub struct Usage;\nimpl Usage { pub fn create_smart_usage(&self) -> String { String::new() } }\n\
                 pub fn get_required_usage_from() {}\n",
            ),
            ("src/main.rs", "fn main() {}\n"),
            ("src/bin/tool.rs", "fn main() {}\nmod inner { pub fn helper() {} }\n"),
        ]);
        let m = index.get("create_smart_usage")[0];
        assert_eq!(m.qualified_path, "toy::output::usage::Usage::create_smart_usage");
        assert_eq!(m.kind, FunctionKind::InherentMethod);
        assert_eq!(index.lookup("crate::output::usage::get_required_usage_from").len(), 1);
        assert_eq!(index.lookup("Usage::create_smart_usage").len(), 1);
        assert_eq!(index.lookup("usage::create_smart_usage").len(), 0);
        assert_eq!(index.get("main").len(), 2);
        assert_eq!(index.get("tool::inner::helper").len(), 1);
    }

    #[test]
    fn closures_are_not_indexed() {
        let (_d, index) = index_text(&[("src/lib.rs", "const ADD: fn(i32, i32) -> i32 = |a, b| a + b;\n")]);
        assert!(index.functions.is_empty());
        assert_eq!(index.excluded[0].reason, ExclusionReason::Closure);
        assert_eq!(index.excluded[0].qualified_path, "toy::ADD");
    }

    #[test]
    fn local_closure_is_recorded_as_excluded() {
        let (_d, index) = index_text(&[(
            "src/lib.rs",
            "pub fn outer() -> i32 { let double = |x: i32| x * 2; fn nested() {} double(2) }\n",
        )]);
        assert_eq!(index.functions.len(), 1);
        let c = index.lookup_excluded("double");
        assert_eq!(c[0].reason, ExclusionReason::Closure);
        assert!(index.lookup("nested").is_empty());
    }

    #[test]
    fn exclusion_reasons() {
        let text = r#"
#[test]
fn a_test() {}

#[cfg(test)]
mod tests {
    fn helper() {}
}

#[cfg(not(test))]
fn production() {}

#[tracing::instrument]
fn traced() {}

#[track_caller]
fn caller() {}

async fn fetch() {}

const fn zero() -> i32 { 0 }

#[async_trait::async_trait]
impl Service for S {
    fn call(&self) {}
}

trait Describe {
    fn describe(&self) -> String { String::new() }
    fn required(&self);
}
"#;
        let (_d, index) = index_text(&[("src/lib.rs", text)]);
        let reason = |name: &str| index.lookup_excluded(name)[0].reason;
        assert_eq!(reason("a_test"), ExclusionReason::TestFunction);
        assert_eq!(reason("helper"), ExclusionReason::TestFunction);
        assert_eq!(reason("traced"), ExclusionReason::ExistingConflictingMacro);
        assert_eq!(reason("caller"), ExclusionReason::ExistingConflictingMacro);
        assert_eq!(reason("fetch"), ExclusionReason::AsyncFunction);
        assert_eq!(reason("zero"), ExclusionReason::ConstFunction);
        assert_eq!(reason("S::call"), ExclusionReason::ExistingConflictingMacro);
        assert_eq!(index.lookup("production").len(), 1);
        let d = index.lookup("describe")[0];
        assert_eq!(d.kind, FunctionKind::TraitMethod);
        assert!(d.trait_default);
        assert!(index.lookup("required").is_empty());
        assert!(index.lookup_excluded("required").is_empty());
    }

    #[test]
    fn unparsable_file_is_a_diagnostic() {
        let (_d, index) = index_text(&[("src/lib.rs", "fn ok() {}\n"), ("src/broken.rs", "fn (\n")]);
        assert_eq!(index.functions.len(), 1);
        assert_eq!(index.diagnostics.len(), 1);
        assert!(index.diagnostics[0].file.ends_with("broken.rs"));
    }

    #[test]
    fn integration_tests_are_their_own_crates() {
        let (_d, index) = index_text(&[
            ("src/lib.rs", ""),
            ("tests/repro.rs", "fn setup() {}\n#[test]\nfn repro() { setup() }\n"),
        ]);
        assert_eq!(index.get("repro::setup").len(), 1);
        assert_eq!(
            index.lookup_excluded("repro::repro")[0].reason,
            ExclusionReason::TestFunction
        );
    }

    #[test]
    fn bom_offsets_are_shifted() {
        let text = "\u{feff}fn a() {}\nfn b() { let x = 1; }\n";
        let (_d, index) = index_text(&[("src/lib.rs", text)]);
        let b = index.get("b")[0];
        assert_eq!(&text[b.span.clone()], "fn b() { let x = 1; }");
        let a = index.get("a")[0];
        assert_eq!(&text[a.span.clone()], "fn a() {}");
    }

    #[test]
    fn suffix_matching() {
        assert!(path_matches("toy::a::b::f", "f"));
        assert!(path_matches("toy::a::b::f", "b::f"));
        assert!(path_matches("toy::a::b::f", "crate::a::b::f"));
        assert!(!path_matches("toy::a::b::f", "crate::b::f"));
        assert!(!path_matches("toy::a::b::f", "a::f"));
        assert!(path_matches("toy::a::b::f", "toy::a::b::f"));
    }
}
