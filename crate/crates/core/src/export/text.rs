//! Natural-language rendering driven by a TOML phrase file.

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use super::SceneGraphDocument;

const REQUIRED: &[&str] = &[
    "layout",
    "rules",
    "no_rules",
    "participants",
    "no_participants",
    "weather",
    "participant",
    "rule_on_element",
    "numbered_element",
    "list_separator",
    "list_last",
    "participant_separator",
];

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template file is not valid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("template file lacks sentence `{0}`")]
    Missing(String),
}

#[derive(Debug, Clone, Deserialize)]
pub struct Templates {
    sentences: BTreeMap<String, String>,
    #[serde(default)]
    names: BTreeMap<String, String>,
    #[serde(default)]
    maneuvers: BTreeMap<String, String>,
    #[serde(default)]
    articles: BTreeMap<String, String>,
}

impl Templates {
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let t: Templates = toml::from_str(text)?;
        for key in REQUIRED {
            if !t.sentences.contains_key(*key) {
                return Err(TemplateError::Missing((*key).to_owned()));
            }
        }
        Ok(t)
    }

    pub fn english() -> Self {
        Self::parse(crate::sample::DEFAULT_TEMPLATES).expect("bundled templates parse")
    }

    fn sentence(&self, key: &str) -> &str {
        &self.sentences[key]
    }

    /// Display name for a class, falling back to the identifier with spaces.
    pub fn name(&self, class: &str) -> String {
        self.names.get(class).cloned().unwrap_or_else(|| class.replace('_', " "))
    }

    pub fn maneuver(&self, class: &str) -> String {
        self.maneuvers.get(class).cloned().unwrap_or_else(|| format!("performs {}", class.replace('_', " ")))
    }

    fn article(&self, class: &str) -> &str {
        self.articles.get(class).or_else(|| self.articles.get("default")).map_or("a", String::as_str)
    }

    fn fill(&self, key: &str, values: &[(&str, &str)]) -> String {
        let mut s = self.sentence(key).to_owned();
        for (k, v) in values {
            s = s.replace(&format!("{{{k}}}"), v);
        }
        s
    }

    fn list(&self, items: &[String]) -> String {
        match items {
            [] => String::new(),
            [one] => one.clone(),
            [init @ .., last] => {
                format!("{}{}{last}", init.join(self.sentence("list_separator")), self.sentence("list_last"))
            }
        }
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Element names by lateral index; repeated classes are numbered left to right.
pub fn element_names(doc: &SceneGraphDocument, t: &Templates) -> Vec<String> {
    let elements = doc.elements();
    let mut totals: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &elements {
        *totals.entry(e.class.as_str()).or_default() += 1;
    }
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    elements
        .iter()
        .map(|e| {
            let n = seen.entry(e.class.as_str()).or_default();
            *n += 1;
            let name = t.name(&e.class);
            if totals[e.class.as_str()] > 1 {
                t.fill("numbered_element", &[("element", &name), ("number", &n.to_string())])
            } else {
                name
            }
        })
        .collect()
}

/// One sentence each for layout, rules, participants and weather.
pub fn to_text(doc: &SceneGraphDocument, t: &Templates) -> String {
    let names = element_names(doc, t);
    let elements = doc.elements();
    let lateral = |id: &str| elements.iter().position(|e| e.id == id);
    let layout_class = doc.layout_root().map(|n| n.class.as_str()).unwrap_or_default();
    let mut sentences = vec![t.fill("layout", &[("layout", &t.name(layout_class)), ("elements", &t.list(&names))])];

    let mut rules: Vec<(String, Option<usize>)> = doc
        .rules()
        .iter()
        .map(|r| {
            let scope = doc.targets(&r.id, "applies_to").next().and_then(|e| lateral(&e.id));
            (r.class.clone(), scope)
        })
        .collect();
    rules.sort();
    let rule_phrases: Vec<String> = rules
        .iter()
        .map(|(class, scope)| match scope {
            Some(k) => t.fill("rule_on_element", &[("rule", &t.name(class)), ("element", &names[*k])]),
            None => t.name(class),
        })
        .collect();
    sentences.push(if rule_phrases.is_empty() {
        t.sentence("no_rules").to_owned()
    } else {
        t.fill("rules", &[("rules", &t.list(&rule_phrases))])
    });

    let participants: Vec<String> = doc
        .participants()
        .iter()
        .map(|(node, element, index, maneuver)| {
            t.fill(
                "participant",
                &[
                    ("article", t.article(&node.class)),
                    ("class", &t.name(&node.class)),
                    ("element", &names[*element]),
                    ("position", &(index + 1).to_string()),
                    ("maneuver", &t.maneuver(maneuver)),
                ],
            )
        })
        .collect();
    sentences.push(if participants.is_empty() {
        t.sentence("no_participants").to_owned()
    } else {
        t.fill("participants", &[("participants", &participants.join(t.sentence("participant_separator")))])
    });

    let weather = doc.weather().map(|w| t.name(&w.class)).unwrap_or_default();
    sentences.push(t.fill("weather", &[("weather", &weather)]));
    sentences.iter().map(|s| capitalize(s)).collect::<Vec<_>>().join(" ")
}
