// SPDX-License-Identifier: Apache-2.0

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::Id;

/// Integer base-level pixel coordinate pair `[x, y]`.
pub type Point = [i64; 2];

/// Every type an App Description can declare for an io key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataType {
    Wsi,
    Point,
    Line,
    Arrow,
    Rectangle,
    Polygon,
    Circle,
    Integer,
    Float,
    Bool,
    String,
    Class,
    Collection,
}

impl DataType {
    pub fn is_annotation(self) -> bool {
        use DataType::*;
        matches!(self, Point | Line | Arrow | Rectangle | Polygon | Circle)
    }

    pub fn is_primitive(self) -> bool {
        use DataType::*;
        matches!(self, Integer | Float | Bool | String)
    }

    pub fn as_str(self) -> &'static str {
        use DataType::*;
        match self {
            Wsi => "wsi",
            Point => "point",
            Line => "line",
            Arrow => "arrow",
            Rectangle => "rectangle",
            Polygon => "polygon",
            Circle => "circle",
            Integer => "integer",
            Float => "float",
            Bool => "bool",
            String => "string",
            Class => "class",
            Collection => "collection",
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Geometry {
    Point { coordinates: Point },
    Line { coordinates: Vec<Point> },
    Arrow { coordinates: Vec<Point> },
    Polygon { coordinates: Vec<Point> },
    Rectangle { upper_left: Point, width: i64, height: i64 },
    Circle { center: Point, radius: i64 },
}

impl Geometry {
    pub fn data_type(&self) -> DataType {
        match self {
            Geometry::Point { .. } => DataType::Point,
            Geometry::Line { .. } => DataType::Line,
            Geometry::Arrow { .. } => DataType::Arrow,
            Geometry::Polygon { .. } => DataType::Polygon,
            Geometry::Rectangle { .. } => DataType::Rectangle,
            Geometry::Circle { .. } => DataType::Circle,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Creator {
    #[default]
    Scope,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<Id>,
    #[serde(flatten)]
    pub geometry: Geometry,
    pub npp_created: f64,
    pub reference: Id,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub creator: Creator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum PrimitiveValue {
    Integer(i64),
    Float(f64),
    Bool(bool),
    String(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<Id>,
    #[serde(flatten)]
    pub value: PrimitiveValue,
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Id>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ClassTag {
    #[default]
    Class,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum CollectionTag {
    #[default]
    Collection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassValue {
    #[serde(rename = "type", default)]
    tag: ClassTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<Id>,
    pub value: String,
    pub reference: Id,
}

impl ClassValue {
    pub fn new(value: impl Into<String>, reference: Id) -> Self {
        ClassValue { tag: ClassTag::Class, id: None, value: value.into(), reference }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collection {
    #[serde(rename = "type", default)]
    tag: CollectionTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<Id>,
    #[serde(default)]
    pub name: String,
    pub item_type: DataType,
    pub items: Vec<Entity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Id>,
}

impl Collection {
    pub fn new(item_type: DataType, items: Vec<Entity>) -> Self {
        Collection { tag: CollectionTag::Collection, id: None, name: String::new(), item_type, items, reference: None }
    }
}

/// Any result or input entity exchanged over the App Interface.
#[derive(Debug, Clone, PartialEq)]
pub enum Entity {
    Annotation(Annotation),
    Primitive(Primitive),
    Class(ClassValue),
    Collection(Collection),
}

impl Entity {
    pub fn data_type(&self) -> DataType {
        match self {
            Entity::Annotation(a) => a.geometry.data_type(),
            Entity::Primitive(p) => match p.value {
                PrimitiveValue::Integer(_) => DataType::Integer,
                PrimitiveValue::Float(_) => DataType::Float,
                PrimitiveValue::Bool(_) => DataType::Bool,
                PrimitiveValue::String(_) => DataType::String,
            },
            Entity::Class(_) => DataType::Class,
            Entity::Collection(_) => DataType::Collection,
        }
    }

    pub fn id(&self) -> Option<Id> {
        match self {
            Entity::Annotation(a) => a.id,
            Entity::Primitive(p) => p.id,
            Entity::Class(c) => c.id,
            Entity::Collection(c) => c.id,
        }
    }

    pub fn set_id(&mut self, id: Id) {
        match self {
            Entity::Annotation(a) => a.id = Some(id),
            Entity::Primitive(p) => p.id = Some(id),
            Entity::Class(c) => c.id = Some(id),
            Entity::Collection(c) => c.id = Some(id),
        }
    }

    pub fn reference(&self) -> Option<Id> {
        match self {
            Entity::Annotation(a) => Some(a.reference),
            Entity::Primitive(p) => p.reference,
            Entity::Class(c) => Some(c.reference),
            Entity::Collection(c) => c.reference,
        }
    }

    /// Nesting depth: 0 for a plain entity, 1 for a flat collection.
    pub fn depth(&self) -> usize {
        match self {
            Entity::Collection(c) => 1 + c.items.iter().map(Entity::depth).max().unwrap_or(0),
            _ => 0,
        }
    }

    /// Visits this entity and every nested item, parents first.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Entity)) {
        f(self);
        if let Entity::Collection(c) = self {
            for item in &c.items {
                item.visit(f);
            }
        }
    }

    pub fn ids(&self) -> Vec<Id> {
        let mut out = Vec::new();
        self.visit(&mut |e| out.extend(e.id()));
        out
    }

    /// Fills in missing ids with values derived from `seed` and the item's
    /// position, so the same document always receives the same ids.
    pub fn assign_missing_ids(&mut self, seed: &[u8]) {
        self.assign_at(seed, &mut Vec::new());
    }

    fn assign_at(&mut self, seed: &[u8], path: &mut Vec<u8>) {
        if self.id().is_none() {
            self.set_id(Id::derive(&[seed, path]));
        }
        if let Entity::Collection(c) = self {
            for (i, item) in c.items.iter_mut().enumerate() {
                path.extend_from_slice(&(i as u64).to_le_bytes());
                item.assign_at(seed, path);
                path.truncate(path.len() - 8);
            }
        }
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("entities always serialize")
    }
}

impl Serialize for Entity {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Entity::Annotation(a) => a.serialize(serializer),
            Entity::Primitive(p) => p.serialize(serializer),
            Entity::Class(c) => c.serialize(serializer),
            Entity::Collection(c) => c.serialize(serializer),
        }
    }
}

impl<'de> Deserialize<'de> for Entity {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        let tag = value
            .get("type")
            .and_then(Value::as_str)
            .ok_or_else(|| D::Error::custom("entity is missing a string \"type\" field"))?;
        let data_type: DataType = serde_json::from_value(Value::String(tag.to_string()))
            .map_err(|_| D::Error::custom(format!("unknown entity type {tag:?}")))?;
        let parsed = match data_type {
            DataType::Wsi => return Err(D::Error::custom("wsi is not an entity type")),
            t if t.is_annotation() => serde_json::from_value(value).map(Entity::Annotation),
            t if t.is_primitive() => serde_json::from_value(value).map(Entity::Primitive),
            DataType::Class => serde_json::from_value(value).map(Entity::Class),
            _ => serde_json::from_value(value).map(Entity::Collection),
        };
        parsed.map_err(D::Error::custom)
    }
}

impl From<Annotation> for Entity {
    fn from(a: Annotation) -> Self {
        Entity::Annotation(a)
    }
}

impl From<Primitive> for Entity {
    fn from(p: Primitive) -> Self {
        Entity::Primitive(p)
    }
}

impl From<ClassValue> for Entity {
    fn from(c: ClassValue) -> Self {
        Entity::Class(c)
    }
}

impl From<Collection> for Entity {
    fn from(c: Collection) -> Self {
        Entity::Collection(c)
    }
}

impl Annotation {
    pub fn new(geometry: Geometry, reference: Id) -> Self {
        Annotation { id: None, geometry, npp_created: 0.0, reference, name: String::new(), creator: Creator::Scope }
    }

    pub fn point(x: i64, y: i64, reference: Id) -> Self {
        Self::new(Geometry::Point { coordinates: [x, y] }, reference)
    }

    pub fn rectangle(x: i64, y: i64, width: i64, height: i64, reference: Id) -> Self {
        Self::new(Geometry::Rectangle { upper_left: [x, y], width, height }, reference)
    }
}

impl Primitive {
    pub fn new(value: PrimitiveValue) -> Self {
        Primitive { id: None, value, name: String::new(), reference: None }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn slide() -> Id {
        Id::from_bytes([7; 16])
    }

    #[test]
    fn wire_shapes() {
        let p = Entity::from(Annotation::point(3, 4, slide()));
        let v = p.to_json();
        assert_eq!(v["type"], "point");
        assert_eq!(v["coordinates"], json!([3, 4]));
        assert_eq!(v["reference"], slide().to_string());

        let f = Entity::from(Primitive::new(PrimitiveValue::Float(30.0)));
        assert_eq!(f.to_json(), json!({"type": "float", "value": 30.0, "name": ""}));

        let c = Entity::from(ClassValue::new("a.b.classes.x", slide()));
        assert_eq!(c.to_json()["type"], "class");

        let col = Entity::from(Collection::new(DataType::Point, vec![p.clone()]));
        let v = col.to_json();
        assert_eq!(v["type"], "collection");
        assert_eq!(v["item_type"], "point");
        assert_eq!(serde_json::from_value::<Entity>(v).unwrap(), col);
    }

    #[test]
    fn rejects_unknown_and_wsi() {
        assert!(serde_json::from_value::<Entity>(json!({"type": "blob"})).is_err());
        assert!(serde_json::from_value::<Entity>(json!({"type": "wsi"})).is_err());
        assert!(serde_json::from_value::<Entity>(json!({"value": 1})).is_err());
    }

    #[test]
    fn id_assignment_is_deterministic_and_distinct() {
        let mut a = Entity::from(Collection::new(
            DataType::Point,
            vec![Annotation::point(1, 1, slide()).into(), Annotation::point(1, 1, slide()).into()],
        ));
        let mut b = a.clone();
        a.assign_missing_ids(b"seed");
        b.assign_missing_ids(b"seed");
        assert_eq!(a, b);
        let ids = a.ids();
        assert_eq!(ids.len(), 3);
        let unique: std::collections::BTreeSet<_> = ids.iter().collect();
        assert_eq!(unique.len(), 3);
    }

    fn arb_id() -> impl Strategy<Value = Id> {
        any::<[u8; 16]>().prop_map(Id::from_bytes)
    }

    fn arb_point() -> impl Strategy<Value = Point> {
        (-5i64..5000, -5i64..5000).prop_map(|(x, y)| [x, y])
    }

    fn arb_geometry() -> impl Strategy<Value = Geometry> {
        prop_oneof![
            arb_point().prop_map(|coordinates| Geometry::Point { coordinates }),
            prop::collection::vec(arb_point(), 0..5).prop_map(|coordinates| Geometry::Line { coordinates }),
            prop::collection::vec(arb_point(), 0..5).prop_map(|coordinates| Geometry::Arrow { coordinates }),
            prop::collection::vec(arb_point(), 0..6).prop_map(|coordinates| Geometry::Polygon { coordinates }),
            (arb_point(), 0i64..100, 0i64..100)
                .prop_map(|(upper_left, width, height)| Geometry::Rectangle { upper_left, width, height }),
            (arb_point(), 0i64..50).prop_map(|(center, radius)| Geometry::Circle { center, radius }),
        ]
    }

    fn arb_leaf() -> impl Strategy<Value = Entity> {
        prop_oneof![
            (proptest::option::of(arb_id()), arb_geometry(), arb_id(), -1e6f64..1e6, "[a-z ]{0,8}", any::<bool>())
                .prop_map(|(id, geometry, reference, npp_created, name, user)| {
                    Entity::Annotation(Annotation {
                        id,
                        geometry,
                        npp_created,
                        reference,
                        name,
                        creator: if user { Creator::User } else { Creator::Scope },
                    })
                }),
            (
                proptest::option::of(arb_id()),
                prop_oneof![
                    any::<i64>().prop_map(PrimitiveValue::Integer),
                    (-1e9f64..1e9).prop_map(PrimitiveValue::Float),
                    any::<bool>().prop_map(PrimitiveValue::Bool),
                    "\\PC{0,10}".prop_map(PrimitiveValue::String),
                ],
                proptest::option::of(arb_id())
            )
                .prop_map(|(id, value, reference)| {
                    Entity::Primitive(Primitive { id, value, name: "n".into(), reference })
                }),
            (proptest::option::of(arb_id()), "[a-z.]{1,20}", arb_id()).prop_map(|(id, value, reference)| {
                let mut c = ClassValue::new(value, reference);
                c.id = id;
                Entity::Class(c)
            }),
        ]
    }

    fn arb_entity() -> impl Strategy<Value = Entity> {
        arb_leaf().prop_recursive(3, 24, 4, |inner| {
            (prop::collection::vec(inner, 0..4), proptest::option::of(arb_id())).prop_map(|(items, reference)| {
                let item_type = items.first().map(Entity::data_type).unwrap_or(DataType::Point);
                let mut c = Collection::new(item_type, items);
                c.reference = reference;
                Entity::Collection(c)
            })
        })
    }

    proptest! {
        #[test]
        fn serialization_roundtrip(entity in arb_entity()) {
            let text = serde_json::to_string(&entity).unwrap();
            let back: Entity = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back, entity);
        }
    }
}
