use std::collections::BTreeMap;

use crate::media::{AssetCache, AssetKind, AssetRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OverlayFamily {
    Gesture,
    Tool,
}

pub const GESTURE_ICONS: [&str; 7] = ["pinch", "poke", "grip", "tap", "swipe", "press", "twist"];
pub const TOOL_ICONS: [&str; 6] = ["mouseclick", "brush", "keyboard", "drag", "scroll", "eraser"];

/// Motion tokens mapped onto an icon of each family.
const ALIASES: [(OverlayFamily, &str, &str); 3] = [
    (OverlayFamily::Gesture, "translation", "grip"),
    (OverlayFamily::Gesture, "rotation", "twist"),
    (OverlayFamily::Tool, "translation", "drag"),
];

fn icon_svg(family: OverlayFamily, name: &str) -> String {
    let (stroke, shape) = match family {
        OverlayFamily::Gesture => ("#2b8a3e", r#"<circle cx="32" cy="32" r="28"/>"#),
        OverlayFamily::Tool => ("#1864ab", r#"<rect x="4" y="4" width="56" height="56" rx="8"/>"#),
    };
    format!(
        concat!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 64 64">"#,
            r#"<g fill="none" stroke="{}" stroke-width="4">{}</g>"#,
            r#"<text x="32" y="38" font-size="11" text-anchor="middle">{}</text></svg>"#
        ),
        stroke, shape, name
    )
}

/// Named overlay icons, stored in the asset cache so clients fetch them like
/// any other asset.
#[derive(Debug, Clone, Default)]
pub struct AssetCatalog {
    entries: BTreeMap<(u8, String), AssetRef>,
}

fn key(family: OverlayFamily, name: &str) -> (u8, String) {
    (family as u8, name.trim().to_lowercase())
}

impl AssetCatalog {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The bundled gesture and tool icons.
    pub fn builtin(cache: &AssetCache) -> std::io::Result<Self> {
        let mut cat = AssetCatalog::empty();
        for (family, names) in [(OverlayFamily::Gesture, &GESTURE_ICONS[..]), (OverlayFamily::Tool, &TOOL_ICONS[..])] {
            for name in names {
                cat.insert(family, name, cache, icon_svg(family, name).as_bytes())?;
            }
        }
        for (family, alias, target) in ALIASES {
            let asset = cat.entries[&key(family, target)].clone();
            cat.entries.insert(key(family, alias), asset);
        }
        Ok(cat)
    }

    pub fn insert(
        &mut self,
        family: OverlayFamily,
        name: &str,
        cache: &AssetCache,
        bytes: &[u8],
    ) -> std::io::Result<AssetRef> {
        let asset = AssetRef::new(cache.put(bytes)?, AssetKind::Image);
        self.entries.insert(key(family, name), asset.clone());
        Ok(asset)
    }

    pub fn lookup(&self, family: OverlayFamily, token: &str) -> Option<&AssetRef> {
        self.entries.get(&key(family, token))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_icons_are_cached_and_distinct() {
        let cache = AssetCache::in_memory();
        let cat = AssetCatalog::builtin(&cache).unwrap();
        assert_eq!(cat.len(), GESTURE_ICONS.len() + TOOL_ICONS.len() + ALIASES.len());
        let pinch = cat.lookup(OverlayFamily::Gesture, "Pinch").unwrap();
        assert!(cache.contains(&pinch.digest));
        assert_ne!(pinch, cat.lookup(OverlayFamily::Gesture, "tap").unwrap());
        assert!(cat.lookup(OverlayFamily::Tool, "pinch").is_none());
        assert_eq!(cat.lookup(OverlayFamily::Gesture, "rotation"), cat.lookup(OverlayFamily::Gesture, "twist"));
    }
}
