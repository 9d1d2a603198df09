//! Named object library: outline plus support-friction parameters.

use std::collections::BTreeMap;
use std::path::Path;

use pushrl_core::physics::{ConvexShape, SliderParams};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LIBRARY_SCHEMA: u32 = 1;

/// Vertex count of the polygonal stand-in for a disc.
pub const CIRCLE_SIDES: usize = 48;

const BUILTIN_JSON: &str = include_str!("../data/objects.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectEntry {
    pub shape: ConvexShape,
    pub slider: SliderParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LibraryFile {
    schema_version: u32,
    objects: Vec<ObjectEntry>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObjectLibrary {
    entries: BTreeMap<String, ObjectEntry>,
}

impl ObjectLibrary {
    /// The shipped library: square, circle, hexagon, thin-box, large-circle.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_JSON).expect("shipped object library parses")
    }

    /// Builds the shipped library from its geometric definition.
    pub fn generate() -> Self {
        let shapes = [
            ConvexShape::square("square", 0.075),
            ConvexShape::regular("circle", CIRCLE_SIDES, 0.045),
            ConvexShape::regular("hexagon", 6, 0.04),
            // Long side faces the pusher.
            ConvexShape::rectangle("thin-box", 0.03, 0.09),
            ConvexShape::regular("large-circle", CIRCLE_SIDES, 0.08),
        ];
        let mut lib = Self::default();
        for s in shapes {
            let shape = s.expect("builtin outline is convex");
            let slider = SliderParams::for_shape(&shape);
            lib.insert(shape, slider).expect("builtin slider is valid");
        }
        lib
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: LibraryFile = serde_path_to_error::deserialize(de).map_err(|e| Error::Config(format!("object library: {e}")))?;
        if file.schema_version != LIBRARY_SCHEMA {
            return Err(Error::Config(format!("object library schema {} (expected {LIBRARY_SCHEMA})", file.schema_version)));
        }
        let mut lib = Self::default();
        for e in file.objects {
            lib.insert(e.shape, e.slider)?;
        }
        Ok(lib)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = LibraryFile { schema_version: LIBRARY_SCHEMA, objects: self.entries.values().cloned().collect() };
        serde_json::to_string_pretty(&file).expect("library serializes")
    }

    /// Replaces any entry of the same name.
    pub fn insert(&mut self, shape: ConvexShape, slider: SliderParams) -> Result<()> {
        slider.validate(&shape)?;
        self.entries.insert(shape.name().to_string(), ObjectEntry { shape, slider });
        Ok(())
    }

    /// Adds or replaces every entry of `other`.
    pub fn merge(&mut self, other: ObjectLibrary) {
        self.entries.extend(other.entries);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Result<&ObjectEntry> {
        self.entries.get(name).ok_or_else(|| Error::unknown("object", name, self.names()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
