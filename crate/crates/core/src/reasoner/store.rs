use std::collections::{HashMap, HashSet};

use crate::kb::{ClassId, Fact, InstanceId, PropertyId};

/// Scene-local set of facts with lookup indexes.
///
/// Facts keep their insertion order; the generation of a fact is its position
/// in that order, so `generation()` only grows when a new fact is inserted.
#[derive(Debug, Clone, Default)]
pub struct FactStore {
    facts: Vec<Fact>,
    seen: HashSet<Fact>,
    by_subject: HashMap<InstanceId, Vec<u32>>,
    by_property: HashMap<PropertyId, Vec<u32>>,
    by_property_object: HashMap<(PropertyId, InstanceId), Vec<u32>>,
    by_property_subject: HashMap<(PropertyId, InstanceId), Vec<u32>>,
    by_class: HashMap<ClassId, Vec<InstanceId>>,
    classes_of: HashMap<InstanceId, Vec<ClassId>>,
    next_instance: u32,
}

impl FactStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Allocates the next dense instance id.
    pub fn fresh_instance(&mut self) -> InstanceId {
        let id = InstanceId(self.next_instance);
        self.next_instance += 1;
        id
    }

    /// One past the highest instance id allocated or mentioned so far.
    pub fn instance_count(&self) -> u32 {
        self.next_instance
    }

    pub fn generation(&self) -> usize {
        self.facts.len()
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn contains(&self, fact: &Fact) -> bool {
        self.seen.contains(fact)
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    /// Facts inserted at or after `generation`.
    pub fn since(&self, generation: usize) -> &[Fact] {
        &self.facts[generation.min(self.facts.len())..]
    }

    pub fn sorted_facts(&self) -> Vec<Fact> {
        let mut v = self.facts.clone();
        v.sort_unstable();
        v
    }

    pub fn assert_class(&mut self, instance: InstanceId, class: ClassId) -> bool {
        self.insert(Fact::Class { instance, class })
    }

    pub fn assert_property(&mut self, subject: InstanceId, property: PropertyId, object: InstanceId) -> bool {
        self.insert(Fact::Property { subject, property, object })
    }

    /// Returns `false` (and changes nothing) if the fact is already present.
    pub fn insert(&mut self, fact: Fact) -> bool {
        if !self.seen.insert(fact) {
            return false;
        }
        let pos = self.facts.len() as u32;
        self.facts.push(fact);
        match fact {
            Fact::Class { instance, class } => {
                self.bump(instance);
                self.by_subject.entry(instance).or_default().push(pos);
                self.by_class.entry(class).or_default().push(instance);
                self.classes_of.entry(instance).or_default().push(class);
            }
            Fact::Property { subject, property, object } => {
                self.bump(subject);
                self.bump(object);
                self.by_subject.entry(subject).or_default().push(pos);
                self.by_property.entry(property).or_default().push(pos);
                self.by_property_object.entry((property, object)).or_default().push(pos);
                self.by_property_subject.entry((property, subject)).or_default().push(pos);
            }
        }
        true
    }

    fn bump(&mut self, id: InstanceId) {
        self.next_instance = self.next_instance.max(id.0 + 1);
    }

    fn pair(&self, pos: u32) -> (InstanceId, InstanceId) {
        match self.facts[pos as usize] {
            Fact::Property { subject, object, .. } => (subject, object),
            Fact::Class { .. } => unreachable!("property index points at a class fact"),
        }
    }

    pub fn about(&self, subject: InstanceId) -> impl Iterator<Item = &Fact> + '_ {
        self.by_subject.get(&subject).into_iter().flatten().map(|&p| &self.facts[p as usize])
    }

    pub fn with_property(&self, property: PropertyId) -> impl Iterator<Item = (InstanceId, InstanceId)> + '_ {
        self.by_property.get(&property).into_iter().flatten().map(|&p| self.pair(p))
    }

    pub fn objects(&self, subject: InstanceId, property: PropertyId) -> impl Iterator<Item = InstanceId> + '_ {
        self.by_property_subject.get(&(property, subject)).into_iter().flatten().map(|&p| self.pair(p).1)
    }

    pub fn subjects(&self, property: PropertyId, object: InstanceId) -> impl Iterator<Item = InstanceId> + '_ {
        self.by_property_object.get(&(property, object)).into_iter().flatten().map(|&p| self.pair(p).0)
    }

    /// Instances asserted directly into `class` (no subsumption).
    pub fn instances_of(&self, class: ClassId) -> &[InstanceId] {
        self.by_class.get(&class).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Classes directly asserted for `instance`.
    pub fn classes_of(&self, instance: InstanceId) -> &[ClassId] {
        self.classes_of.get(&instance).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Checks that every index agrees with the fact list.
    pub fn indexes_consistent(&self) -> bool {
        let mut count = 0usize;
        for (i, f) in self.facts.iter().enumerate() {
            let i = i as u32;
            let ok = match *f {
                Fact::Class { instance, class } => {
                    self.instances_of(class).contains(&instance)
                        && self.classes_of(instance).contains(&class)
                        && self.by_subject[&instance].contains(&i)
                }
                Fact::Property { subject, property, object } => {
                    self.by_property[&property].contains(&i)
                        && self.by_property_object[&(property, object)].contains(&i)
                        && self.by_property_subject[&(property, subject)].contains(&i)
                        && self.by_subject[&subject].contains(&i)
                }
            };
            if !ok {
                return false;
            }
            count += 1;
        }
        let indexed: usize = self.by_subject.values().map(Vec::len).sum();
        count == self.seen.len() && indexed == self.facts.len()
    }
}
