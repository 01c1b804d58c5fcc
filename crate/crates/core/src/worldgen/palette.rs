use std::collections::HashSet;
use std::path::Path;

use super::WorldError;

const DEFAULT_COLORS: &str = include_str!("../../data/colors.txt");

/// Ordered list of unique snake_case color names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Palette {
    names: Vec<String>,
}

impl Palette {
    pub fn new<I, S>(names: I) -> Result<Self, WorldError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut seen = HashSet::new();
        for name in &names {
            let snake = !name.is_empty()
                && !name.starts_with('_')
                && !name.ends_with('_')
                && name
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
            if !snake {
                return Err(WorldError::InvalidPalette(format!(
                    "{name:?} is not a snake_case name"
                )));
            }
            if !seen.insert(name.as_str()) {
                return Err(WorldError::InvalidPalette(format!(
                    "duplicate name {name:?}"
                )));
            }
        }
        Ok(Self { names })
    }

    /// Parses `colors.txt` content: one name per line, no blank lines.
    pub fn from_text(text: &str) -> Result<Self, WorldError> {
        let text = text.strip_suffix('\n').unwrap_or(text);
        if text.lines().any(|l| l.trim().is_empty()) {
            return Err(WorldError::InvalidPalette("blank line".into()));
        }
        Self::new(text.lines().map(str::trim))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WorldError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// The bundled palette.
    pub fn builtin() -> Self {
        Self::from_text(DEFAULT_COLORS).expect("bundled palette is valid")
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

impl Default for Palette {
    fn default() -> Self {
        Self::builtin()
    }
}
