//! Structural view of `Cargo.toml`: package identity, workspace members,
//! dependency edges and features. Everything else in the file is ignored.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

pub const MANIFEST_FILE: &str = "Cargo.toml";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest not found: {0}")]
    FileNotFound(PathBuf),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    ManifestSyntax {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}: [package] section has no name")]
    MissingPackageName(PathBuf),
    #[error("workspace member `{member}` does not exist under {root}")]
    MemberNotFound { root: PathBuf, member: String },
    #[error("dependency `{name}`: {reason}")]
    InvalidDependency { name: String, reason: String },
    #[error("name `{0}` collides with another package or dependency")]
    NameCollision(String),
    #[error("`{0}` is not a valid package name")]
    InvalidIdentifier(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Registry,
    Path,
    Git,
    /// `dep = { workspace = true }`; resolution is left to the caller.
    Inherited,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepSection {
    Normal,
    Dev,
    Build,
}

impl DepSection {
    pub const ALL: [DepSection; 3] = [DepSection::Normal, DepSection::Dev, DepSection::Build];

    pub fn table_name(self) -> &'static str {
        match self {
            DepSection::Normal => "dependencies",
            DepSection::Dev => "dev-dependencies",
            DepSection::Build => "build-dependencies",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyEdge {
    pub name: String,
    pub source_kind: SourceKind,
    pub version_req: Option<String>,
    pub path: Option<PathBuf>,
    pub git: Option<String>,
    pub section: DepSection,
}

impl DependencyEdge {
    pub fn registry(name: impl Into<String>, version_req: impl Into<String>) -> Self {
        DependencyEdge {
            name: name.into(),
            source_kind: SourceKind::Registry,
            version_req: Some(version_req.into()),
            path: None,
            git: None,
            section: DepSection::Normal,
        }
    }

    pub fn path(name: impl Into<String>, path: impl Into<PathBuf>) -> Self {
        DependencyEdge {
            name: name.into(),
            source_kind: SourceKind::Path,
            version_req: None,
            path: Some(path.into()),
            git: None,
            section: DepSection::Normal,
        }
    }

    fn from_toml(name: &str, section: DepSection, value: &Value) -> Result<Self, ManifestError> {
        let invalid = |reason: &str| ManifestError::InvalidDependency {
            name: name.to_owned(),
            reason: reason.to_owned(),
        };
        let mut edge = DependencyEdge {
            name: name.to_owned(),
            source_kind: SourceKind::Registry,
            version_req: None,
            path: None,
            git: None,
            section,
        };
        match value {
            Value::String(req) => edge.version_req = Some(req.clone()),
            Value::Table(t) => {
                edge.version_req = t.get("version").and_then(Value::as_str).map(str::to_owned);
                if t.get("workspace").and_then(Value::as_bool) == Some(true) {
                    edge.source_kind = SourceKind::Inherited;
                } else if let Some(p) = t.get("path") {
                    let p = p.as_str().ok_or_else(|| invalid("`path` is not a string"))?;
                    edge.source_kind = SourceKind::Path;
                    edge.path = Some(PathBuf::from(p));
                } else if let Some(g) = t.get("git") {
                    let g = g.as_str().ok_or_else(|| invalid("`git` is not a string"))?;
                    edge.source_kind = SourceKind::Git;
                    edge.git = Some(g.to_owned());
                } else if edge.version_req.is_none() {
                    return Err(invalid("no version, path, git or workspace source"));
                }
            }
            _ => return Err(invalid("expected a version string or a table")),
        }
        Ok(edge)
    }

    fn to_toml(&self) -> Result<toml_edit::Item, ManifestError> {
        let invalid = |reason: &str| ManifestError::InvalidDependency {
            name: self.name.clone(),
            reason: reason.to_owned(),
        };
        let mut t = toml_edit::InlineTable::new();
        match self.source_kind {
            SourceKind::Registry => {
                let req = self
                    .version_req
                    .as_deref()
                    .ok_or_else(|| invalid("registry dependency without a version"))?;
                return Ok(toml_edit::value(req));
            }
            SourceKind::Path => {
                let p = self
                    .path
                    .as_ref()
                    .ok_or_else(|| invalid("path dependency without a path"))?;
                t.insert("path", path_str(p).into());
            }
            SourceKind::Git => {
                let g = self
                    .git
                    .as_deref()
                    .ok_or_else(|| invalid("git dependency without a url"))?;
                t.insert("git", g.into());
            }
            SourceKind::Inherited => {
                return Err(invalid(
                    "inherited dependencies cannot be rendered outside their workspace",
                ))
            }
        }
        if let Some(req) = &self.version_req {
            t.insert("version", req.as_str().into());
        }
        Ok(toml_edit::value(t))
    }
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestModel {
    /// `None` only for a virtual workspace.
    pub package_name: Option<String>,
    pub package_path: PathBuf,
    pub is_workspace_root: bool,
    pub members: Vec<PathBuf>,
    pub dependencies: Vec<DependencyEdge>,
    pub features: BTreeMap<String, Vec<String>>,
    pub lib_target_present: bool,
    /// Explicit `[lib] name`, when it differs from the package name.
    pub lib_name: Option<String>,
    pub edition: Option<String>,
}

impl ManifestModel {
    pub fn manifest_path(&self) -> PathBuf {
        self.package_path.join(MANIFEST_FILE)
    }

    pub fn is_virtual(&self) -> bool {
        self.package_name.is_none()
    }

    /// Identifier under which the library is imported from Rust code.
    pub fn crate_ident(&self) -> Option<String> {
        self.lib_name
            .clone()
            .or_else(|| self.package_name.clone())
            .map(|n| n.replace('-', "_"))
    }

    pub fn dependency(&self, name: &str, section: DepSection) -> Option<&DependencyEdge> {
        self.dependencies
            .iter()
            .find(|d| d.name == name && d.section == section)
    }
}

impl fmt::Display for ManifestModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.package_name {
            Some(name) => write!(f, "{name} ({})", self.package_path.display()),
            None => write!(f, "virtual workspace ({})", self.package_path.display()),
        }
    }
}

/// Read and model the manifest at `manifest_path`.
pub fn parse_manifest(manifest_path: &Path) -> Result<ManifestModel, ManifestError> {
    let text = std::fs::read_to_string(manifest_path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            ManifestError::FileNotFound(manifest_path.to_owned())
        } else {
            ManifestError::Io {
                path: manifest_path.to_owned(),
                source,
            }
        }
    })?;
    let dir = manifest_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    parse_manifest_str(&text, manifest_path, dir)
}

/// Model manifest `text` as if it lived in `package_dir`. `origin` is used
/// in error messages only.
pub fn parse_manifest_str(text: &str, origin: &Path, package_dir: &Path) -> Result<ManifestModel, ManifestError> {
    let doc: Table = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((1, 1));
        ManifestError::ManifestSyntax {
            path: origin.to_owned(),
            line,
            column,
            message: e.message().to_owned(),
        }
    })?;

    let package = doc.get("package").and_then(Value::as_table);
    let package_name = match package {
        Some(p) => match p.get("name").and_then(Value::as_str) {
            Some(n) if !n.is_empty() => Some(n.to_owned()),
            _ => return Err(ManifestError::MissingPackageName(origin.to_owned())),
        },
        None => None,
    };
    let edition = package
        .and_then(|p| p.get("edition"))
        .and_then(Value::as_str)
        .map(str::to_owned);

    let workspace = doc.get("workspace").and_then(Value::as_table);
    let members = match workspace {
        Some(ws) => expand_members(ws, package_dir)?,
        None => Vec::new(),
    };
    if package_name.is_none() && workspace.is_none() {
        return Err(ManifestError::MissingPackageName(origin.to_owned()));
    }

    let mut dependencies = Vec::new();
    for section in DepSection::ALL {
        let Some(table) = doc.get(section.table_name()).and_then(Value::as_table) else {
            continue;
        };
        for (name, value) in table {
            dependencies.push(DependencyEdge::from_toml(name, section, value)?);
        }
    }

    let features = doc
        .get("features")
        .and_then(Value::as_table)
        .map(|t| {
            t.iter()
                .map(|(k, v)| {
                    let implied = v
                        .as_array()
                        .map(|a| a.iter().filter_map(Value::as_str).map(str::to_owned).collect())
                        .unwrap_or_default();
                    (k.clone(), implied)
                })
                .collect()
        })
        .unwrap_or_default();

    let lib = doc.get("lib").and_then(Value::as_table);
    let lib_name = lib
        .and_then(|l| l.get("name"))
        .and_then(Value::as_str)
        .map(str::to_owned);
    let autolib = package
        .and_then(|p| p.get("autolib"))
        .and_then(Value::as_bool)
        .unwrap_or(true);
    let lib_target_present = package_name.is_some()
        && match lib.and_then(|l| l.get("path")).and_then(Value::as_str) {
            Some(p) => package_dir.join(p).is_file(),
            None => (lib.is_some() || autolib) && package_dir.join("src/lib.rs").is_file(),
        };

    Ok(ManifestModel {
        package_name,
        package_path: package_dir.to_owned(),
        is_workspace_root: workspace.is_some(),
        members,
        dependencies,
        features,
        lib_target_present,
        lib_name,
        edition,
    })
}

fn expand_members(ws: &Table, root: &Path) -> Result<Vec<PathBuf>, ManifestError> {
    let strings = |key: &str| -> Vec<String> {
        ws.get(key)
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_str).map(str::to_owned).collect())
            .unwrap_or_default()
    };
    let exclude: Vec<PathBuf> = strings("exclude").into_iter().map(PathBuf::from).collect();
    let mut out = Vec::new();
    for member in strings("members") {
        if member.contains(['*', '?', '[']) {
            let pattern = root.join(&member);
            let paths = glob::glob(&pattern.to_string_lossy()).map_err(|e| ManifestError::MemberNotFound {
                root: root.to_owned(),
                member: format!("{member} ({e})"),
            })?;
            let mut found: Vec<PathBuf> = paths
                .filter_map(Result::ok)
                .filter(|p| p.join(MANIFEST_FILE).is_file())
                .filter_map(|p| p.strip_prefix(root).ok().map(Path::to_owned))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            if !root.join(&member).is_dir() {
                return Err(ManifestError::MemberNotFound {
                    root: root.to_owned(),
                    member,
                });
            }
            out.push(PathBuf::from(member));
        }
    }
    out.retain(|m| !exclude.contains(m));
    Ok(out)
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
    (line, column)
}

pub fn is_valid_package_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Render the manifest of a fresh package named `test_package_name` that
/// depends on `target` by path, plus `extra_deps`.
///
/// The emitted manifest declares its own empty `[workspace]` so it never
/// joins a workspace found in a parent directory.
pub fn render_workspace_manifest(
    target: &ManifestModel,
    test_package_name: &str,
    extra_deps: &[DependencyEdge],
) -> Result<String, ManifestError> {
    if !is_valid_package_name(test_package_name) {
        return Err(ManifestError::InvalidIdentifier(test_package_name.to_owned()));
    }
    let target_name = target
        .package_name
        .as_deref()
        .ok_or_else(|| ManifestError::MissingPackageName(target.manifest_path()))?;
    let normalized = |s: &str| s.replace('-', "_");
    if normalized(target_name) == normalized(test_package_name) {
        return Err(ManifestError::NameCollision(test_package_name.to_owned()));
    }
    let mut seen = vec![normalized(target_name), normalized(test_package_name)];
    for dep in extra_deps {
        if !is_valid_package_name(&dep.name) {
            return Err(ManifestError::InvalidIdentifier(dep.name.clone()));
        }
        let key = normalized(&dep.name);
        if seen.contains(&key) {
            return Err(ManifestError::NameCollision(dep.name.clone()));
        }
        seen.push(key);
    }

    let mut doc = toml_edit::DocumentMut::new();
    let mut package = toml_edit::Table::new();
    package["name"] = toml_edit::value(test_package_name);
    package["version"] = toml_edit::value("0.1.0");
    package["edition"] = toml_edit::value(target.edition.as_deref().unwrap_or("2021"));
    package["publish"] = toml_edit::value(false);
    doc["package"] = toml_edit::Item::Table(package);

    let mut sections: BTreeMap<DepSection, toml_edit::Table> = BTreeMap::new();
    sections.insert(DepSection::Normal, toml_edit::Table::new());
    let link = DependencyEdge::path(target_name, &target.package_path);
    for dep in std::iter::once(&link).chain(extra_deps) {
        sections
            .entry(dep.section)
            .or_default()
            .insert(&dep.name, dep.to_toml()?);
    }
    for (section, table) in sections {
        doc[section.table_name()] = toml_edit::Item::Table(table);
    }
    doc["workspace"] = toml_edit::Item::Table(toml_edit::Table::new());
    Ok(doc.to_string())
}

/// Add `dep` to the manifest text, keeping existing formatting. Returns
/// `None` when a dependency of that name is already declared.
pub fn add_dependency(text: &str, dep: &DependencyEdge) -> Result<Option<String>, ManifestError> {
    let mut doc: toml_edit::DocumentMut = text.parse().map_err(|e: toml_edit::TomlError| {
        let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((1, 1));
        ManifestError::ManifestSyntax {
            path: PathBuf::from(MANIFEST_FILE),
            line,
            column,
            message: e.message().to_owned(),
        }
    })?;
    let key = dep.section.table_name();
    if doc.get(key).is_none() {
        doc[key] = toml_edit::Item::Table(toml_edit::Table::new());
    }
    let table = doc[key]
        .as_table_like_mut()
        .ok_or_else(|| ManifestError::InvalidDependency {
            name: dep.name.clone(),
            reason: format!("[{key}] is not a table"),
        })?;
    if table.contains_key(&dep.name) {
        return Ok(None);
    }
    table.insert(&dep.name, dep.to_toml()?);
    Ok(Some(doc.to_string()))
}
