//! Linearized project documents.
//!
//! A project tree is serialized into a single nested JSON document: folders
//! are JSON objects, files are string leaves, and file contents keep their
//! newlines verbatim. [`RepoSnapshot`] is the in-memory form of that
//! document; [`FlatView`] is its flattened path → content view.
//!
//! The document schema is strict: every interior node is an object, every
//! leaf is a string. Arrays, numbers, booleans, nulls, duplicate keys, and
//! key segments containing path separators are schema violations.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Errors raised by snapshot construction, parsing, and filesystem I/O.
#[derive(Debug, thiserror::Error)]
pub enum RepoError {
    /// The raw text is not well-formed JSON.
    #[error("syntax error: {0}")]
    Syntax(String),
    /// The text parses as JSON but does not conform to the document schema.
    #[error("schema error: {0}")]
    Schema(String),
    /// A name segment is empty, contains a separator, or is `.`/`..`.
    #[error("invalid name segment `{0}`")]
    InvalidSegment(String),
    /// Inserting a path would turn an existing file into a folder or vice versa.
    #[error("path conflict at `{0}`")]
    Conflict(String),
    /// A file did not decode as UTF-8 text.
    #[error("file is not valid UTF-8 text: {path}")]
    Encoding { path: PathBuf },
    /// Delinearize refuses to write into a non-empty directory.
    #[error("destination directory is not empty: {path}")]
    DestinationNotEmpty { path: PathBuf },
    /// Filesystem failure with the offending path.
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl RepoError {
    fn io(path: &Path, source: io::Error) -> Self {
        RepoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Checks a single path segment: non-empty, no separators, not `.`/`..`.
pub fn validate_segment(segment: &str) -> Result<(), RepoError> {
    if segment.is_empty()
        || segment == "."
        || segment == ".."
        || segment.contains('/')
        || segment.contains('\\')
        || segment.contains('\0')
    {
        return Err(RepoError::InvalidSegment(segment.to_string()));
    }
    Ok(())
}

/// One node of the tree: a text file or a folder of named children.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    File(String),
    Folder(Folder),
}

/// Folders keep children ordered lexicographically by segment.
pub type Folder = BTreeMap<String, Node>;

/// A whole project tree. The root is always a folder.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RepoSnapshot {
    root: Folder,
}

impl RepoSnapshot {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a snapshot from `(path, content)` pairs.
    pub fn from_files<I, P, C>(files: I) -> Result<Self, RepoError>
    where
        I: IntoIterator<Item = (P, C)>,
        P: AsRef<str>,
        C: Into<String>,
    {
        let mut snapshot = Self::new();
        for (path, content) in files {
            snapshot.insert_file(path.as_ref(), content)?;
        }
        Ok(snapshot)
    }

    pub fn root(&self) -> &Folder {
        &self.root
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_empty()
    }

    /// Inserts a file, creating intermediate folders as needed.
    pub fn insert_file(&mut self, path: &str, content: impl Into<String>) -> Result<(), RepoError> {
        let segments = split_path(path)?;
        let (file_name, folders) = segments.split_last().expect("split_path is non-empty");
        let folder = descend(&mut self.root, folders)?;
        match folder.get(*file_name) {
            Some(Node::Folder(_)) => return Err(RepoError::Conflict(path.to_string())),
            Some(Node::File(_)) => return Err(RepoError::Conflict(path.to_string())),
            None => {
                folder.insert((*file_name).to_string(), Node::File(content.into()));
            }
        }
        Ok(())
    }

    /// Inserts an (empty) folder, creating intermediate folders as needed.
    pub fn insert_folder(&mut self, path: &str) -> Result<(), RepoError> {
        let segments = split_path(path)?;
        descend(&mut self.root, &segments)?;
        Ok(())
    }

    /// Content of the file at `path`, if present.
    pub fn get_file(&self, path: &str) -> Option<&str> {
        let mut node: Option<&Node> = None;
        let mut folder = &self.root;
        for segment in path.split('/') {
            node = folder.get(segment);
            match node {
                Some(Node::Folder(children)) => folder = children,
                Some(Node::File(_)) => {}
                None => return None,
            }
        }
        match node {
            Some(Node::File(content)) => Some(content),
            _ => None,
        }
    }

    pub fn file_count(&self) -> usize {
        self.flatten().len()
    }

    /// One entry per file leaf, keyed by `/`-joined path.
    pub fn flatten(&self) -> FlatView {
        let mut entries = BTreeMap::new();
        collect_files(&self.root, String::new(), &mut entries);
        FlatView { entries }
    }

    /// Every folder path and file path in the tree (root excluded).
    /// Empty folders are included.
    pub fn path_set(&self) -> std::collections::BTreeSet<String> {
        let mut paths = std::collections::BTreeSet::new();
        collect_paths(&self.root, String::new(), &mut paths);
        paths
    }

    /// Distinct folder paths (root excluded); empty folders count.
    pub fn folder_paths(&self) -> Vec<String> {
        self.path_set()
            .into_iter()
            .filter(|p| matches!(self.node_at(p), Some(Node::Folder(_))))
            .collect()
    }

    fn node_at(&self, path: &str) -> Option<&Node> {
        let mut folder = &self.root;
        let mut current = None;
        for segment in path.split('/') {
            current = folder.get(segment);
            match current {
                Some(Node::Folder(children)) => folder = children,
                Some(Node::File(_)) => {}
                None => return None,
            }
        }
        current
    }
}

fn split_path(path: &str) -> Result<Vec<&str>, RepoError> {
    if path.is_empty() {
        return Err(RepoError::InvalidSegment(String::new()));
    }
    let segments: Vec<&str> = path.split('/').collect();
    for segment in &segments {
        validate_segment(segment)?;
    }
    Ok(segments)
}

fn descend<'a>(root: &'a mut Folder, folders: &[&str]) -> Result<&'a mut Folder, RepoError> {
    let mut current = root;
    for segment in folders {
        let entry = current
            .entry((*segment).to_string())
            .or_insert_with(|| Node::Folder(Folder::new()));
        match entry {
            Node::Folder(children) => current = children,
            Node::File(_) => return Err(RepoError::Conflict((*segment).to_string())),
        }
    }
    Ok(current)
}

fn collect_files(folder: &Folder, prefix: String, out: &mut BTreeMap<String, String>) {
    for (name, node) in folder {
        let path = join_path(&prefix, name);
        match node {
            Node::File(content) => {
                out.insert(path, content.clone());
            }
            Node::Folder(children) => collect_files(children, path, out),
        }
    }
}

fn collect_paths(folder: &Folder, prefix: String, out: &mut std::collections::BTreeSet<String>) {
    for (name, node) in folder {
        let path = join_path(&prefix, name);
        out.insert(path.clone());
        if let Node::Folder(children) = node {
            collect_paths(children, path, out);
        }
    }
}

fn join_path(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}/{name}")
    }
}

/// Flattened view of a snapshot: full file path → content.
///
/// Keys use `/` regardless of host platform. Empty folders have no file
/// leaves and therefore do not appear in a flat view.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FlatView {
    entries: BTreeMap<String, String>,
}

impl FlatView {
    pub fn from_pairs<I, P, C>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (P, C)>,
        P: Into<String>,
        C: Into<String>,
    {
        FlatView {
            entries: pairs
                .into_iter()
                .map(|(p, c)| (p.into(), c.into()))
                .collect(),
        }
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn get(&self, path: &str) -> Option<&str> {
        self.entries.get(path).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rebuilds the nested snapshot. Fails if a key is invalid or one key's
    /// file collides with another key's folder chain.
    pub fn to_snapshot(&self) -> Result<RepoSnapshot, RepoError> {
        let mut snapshot = RepoSnapshot::new();
        for (path, content) in &self.entries {
            snapshot.insert_file(path, content.clone())?;
        }
        Ok(snapshot)
    }

    /// Two-column `(path, content)` CSV dump for debugging.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("path,content\n");
        for (path, content) in &self.entries {
            out.push_str(&csv_field(path));
            out.push(',');
            out.push_str(&csv_field(content));
            out.push('\n');
        }
        out
    }
}

fn csv_field(value: &str) -> String {
    if value.contains(',') || value.contains('"') || value.contains('\n') || value.contains('\r') {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

impl Serialize for Node {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Node::File(content) => serializer.serialize_str(content),
            Node::Folder(children) => {
                let mut map = serializer.serialize_map(Some(children.len()))?;
                for (name, node) in children {
                    map.serialize_entry(name, node)?;
                }
                map.end()
            }
        }
    }
}

impl Serialize for RepoSnapshot {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.root.len()))?;
        for (name, node) in &self.root {
            map.serialize_entry(name, node)?;
        }
        map.end()
    }
}

struct NodeVisitor;

impl<'de> Visitor<'de> for NodeVisitor {
    type Value = Node;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a string (file content) or an object (folder)")
    }

    fn visit_str<E: de::Error>(self, value: &str) -> Result<Node, E> {
        Ok(Node::File(value.to_string()))
    }

    fn visit_string<E: de::Error>(self, value: String) -> Result<Node, E> {
        Ok(Node::File(value))
    }

    fn visit_map<A: MapAccess<'de>>(self, access: A) -> Result<Node, A::Error> {
        Ok(Node::Folder(folder_from_map(access)?))
    }
}

fn folder_from_map<'de, A: MapAccess<'de>>(mut access: A) -> Result<Folder, A::Error> {
    let mut folder = Folder::new();
    while let Some(name) = access.next_key::<String>()? {
        validate_segment(&name).map_err(de::Error::custom)?;
        let node = access.next_value::<Node>()?;
        if folder.insert(name.clone(), node).is_some() {
            return Err(de::Error::custom(format!("duplicate key `{name}`")));
        }
    }
    Ok(folder)
}

impl<'de> Deserialize<'de> for Node {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Node, D::Error> {
        deserializer.deserialize_any(NodeVisitor)
    }
}

struct SnapshotVisitor;

impl<'de> Visitor<'de> for SnapshotVisitor {
    type Value = RepoSnapshot;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("an object mapping name segments to folders or file contents")
    }

    fn visit_map<A: MapAccess<'de>>(self, access: A) -> Result<RepoSnapshot, A::Error> {
        Ok(RepoSnapshot {
            root: folder_from_map(access)?,
        })
    }
}

impl<'de> Deserialize<'de> for RepoSnapshot {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<RepoSnapshot, D::Error> {
        deserializer.deserialize_map(SnapshotVisitor)
    }
}

/// Parses raw text as a linearized document.
///
/// Malformed JSON yields [`RepoError::Syntax`]; well-formed JSON of the wrong
/// shape (array node, non-string leaf, duplicate or invalid key) yields
/// [`RepoError::Schema`]. The validity metric counts either as invalid.
pub fn parse_snapshot(raw: &str) -> Result<RepoSnapshot, RepoError> {
    serde_json::from_str::<RepoSnapshot>(raw).map_err(|err| match err.classify() {
        serde_json::error::Category::Data => RepoError::Schema(err.to_string()),
        _ => RepoError::Syntax(err.to_string()),
    })
}

/// Parses a flat-form document (`{"a/b.dsl": "content", ...}`) into a
/// snapshot. Input convenience only; emitted documents are always nested.
pub fn parse_flat_document(raw: &str) -> Result<RepoSnapshot, RepoError> {
    let entries: BTreeMap<String, String> =
        serde_json::from_str(raw).map_err(|err| match err.classify() {
            serde_json::error::Category::Data => RepoError::Schema(err.to_string()),
            _ => RepoError::Syntax(err.to_string()),
        })?;
    FlatView { entries }.to_snapshot()
}

/// Deterministic document text: keys sorted lexicographically, fixed JSON
/// escaping, no insignificant whitespace. Equal snapshots serialize
/// identically regardless of construction order.
pub fn canonical_serialize(snapshot: &RepoSnapshot) -> String {
    serde_json::to_string(snapshot).expect("string-keyed map serialization cannot fail")
}

/// Reads a directory tree into a snapshot. Folder ordering is lexicographic
/// by segment; every file must decode as UTF-8 text.
pub fn linearize(root: &Path) -> Result<RepoSnapshot, RepoError> {
    let metadata = fs::metadata(root).map_err(|e| RepoError::io(root, e))?;
    if !metadata.is_dir() {
        return Err(RepoError::io(
            root,
            io::Error::new(io::ErrorKind::NotADirectory, "not a directory"),
        ));
    }
    Ok(RepoSnapshot {
        root: read_folder(root)?,
    })
}

fn read_folder(dir: &Path) -> Result<Folder, RepoError> {
    let mut folder = Folder::new();
    let entries = fs::read_dir(dir).map_err(|e| RepoError::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| RepoError::io(dir, e))?;
        let path = entry.path();
        let name = entry
            .file_name()
            .into_string()
            .map_err(|os| RepoError::InvalidSegment(os.to_string_lossy().into_owned()))?;
        validate_segment(&name)?;
        // Follows symlinks; anything that is neither file nor directory is an error.
        let metadata = fs::metadata(&path).map_err(|e| RepoError::io(&path, e))?;
        let node = if metadata.is_dir() {
            Node::Folder(read_folder(&path)?)
        } else if metadata.is_file() {
            let bytes = fs::read(&path).map_err(|e| RepoError::io(&path, e))?;
            let text = String::from_utf8(bytes).map_err(|_| RepoError::Encoding {
                path: path.clone(),
            })?;
            Node::File(text)
        } else {
            return Err(RepoError::io(
                &path,
                io::Error::new(io::ErrorKind::Unsupported, "unsupported entry type"),
            ));
        };
        folder.insert(name, node);
    }
    Ok(folder)
}

/// Writes a snapshot to `dest`, which must be an empty or absent directory.
/// `linearize(dest)` afterwards reproduces the snapshot byte-exact.
pub fn delinearize(snapshot: &RepoSnapshot, dest: &Path) -> Result<(), RepoError> {
    match fs::read_dir(dest) {
        Ok(mut entries) => {
            if entries.next().is_some() {
                return Err(RepoError::DestinationNotEmpty {
                    path: dest.to_path_buf(),
                });
            }
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            fs::create_dir_all(dest).map_err(|e| RepoError::io(dest, e))?;
        }
        Err(e) => return Err(RepoError::io(dest, e)),
    }
    write_folder(&snapshot.root, dest)
}

fn write_folder(folder: &Folder, dir: &Path) -> Result<(), RepoError> {
    for (name, node) in folder {
        validate_segment(name)?;
        let path = dir.join(name);
        match node {
            Node::File(content) => {
                fs::write(&path, content.as_bytes()).map_err(|e| RepoError::io(&path, e))?;
            }
            Node::Folder(children) => {
                fs::create_dir(&path).map_err(|e| RepoError::io(&path, e))?;
                write_folder(children, &path)?;
            }
        }
    }
    Ok(())
}
