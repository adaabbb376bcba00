use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::util::seeded_index;

/// Facade texture keys grouped by building category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextureLibrary {
    pub groups: BTreeMap<String, Vec<String>>,
}

impl Default for TextureLibrary {
    fn default() -> Self {
        let group = |keys: &[&str]| keys.iter().map(|k| k.to_string()).collect::<Vec<_>>();
        let mut groups = BTreeMap::new();
        groups.insert("historic".into(), group(&["brick_old_red", "brick_old_brown", "stone_gray"]));
        groups.insert("residential".into(), group(&["brick_red", "brick_yellow", "plaster_white", "wood_dark"]));
        groups.insert("commercial".into(), group(&["glass_blue", "concrete_gray", "metal_panel"]));
        groups.insert("industrial".into(), group(&["metal_sheet", "concrete_gray"]));
        groups.insert("default".into(), group(&["plaster_white", "brick_red", "concrete_gray"]));
        TextureLibrary { groups }
    }
}

impl TextureLibrary {
    /// Category from the `construction_year` and `usage` attributes.
    pub fn category(&self, attributes: &BTreeMap<String, String>) -> &str {
        let year = attributes.get("construction_year").and_then(|y| y.parse::<i32>().ok());
        if year.is_some_and(|y| y < 1945) && self.groups.contains_key("historic") {
            return "historic";
        }
        attributes.get("usage").and_then(|u| self.groups.get_key_value(u.as_str())).map_or("default", |(k, _)| k.as_str())
    }

    /// Seeded, order-independent pick for one building.
    pub fn pick(&self, attributes: &BTreeMap<String, String>, building_id: &str, seed: u64) -> Option<&str> {
        let keys = self.groups.get(self.category(attributes)).filter(|k| !k.is_empty())?;
        Some(&keys[seeded_index(seed, building_id, keys.len())])
    }
}
