//! A typed subset of URDF: links with box, cylinder or sphere collision
//! geometry joined by fixed joints. Visual and inertial elements are
//! ignored.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::{Pose, Primitive, Shape};
use crate::se3::{rot_zyx, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UrdfError {
    #[error("malformed XML at line {line}: {message}")]
    MalformedXml { line: u32, message: String },
    #[error("line {line}: unsupported geometry <{kind}>")]
    UnsupportedGeometry { kind: String, line: u32 },
    #[error("line {line}: unsupported joint type \"{kind}\" (only fixed joints)")]
    UnsupportedJoint { kind: String, line: u32 },
    #[error("line {line}: invalid geometry: {reason}")]
    InvalidGeometry { line: u32, reason: String },
    #[error("line {line}: {reason}")]
    Structure { line: u32, reason: String },
    #[error("model has no collision primitives")]
    NoPrimitives,
}

/// `<origin xyz="…" rpy="…"/>`; rpy follows the ZYX convention of
/// [`rot_zyx`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Origin {
    pub xyz: Vec3,
    pub rpy: Vec3,
}

impl Origin {
    pub fn pose(&self) -> Pose {
        Pose::new(self.xyz, rot_zyx(self.rpy.x, self.rpy.y, self.rpy.z))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Collision {
    pub origin: Origin,
    pub shape: Shape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
    pub collisions: Vec<Collision>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub parent: String,
    pub child: String,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UrdfModel {
    pub name: String,
    pub links: Vec<Link>,
    pub joints: Vec<Joint>,
}

fn line_of(doc: &roxmltree::Document, node: roxmltree::Node) -> u32 {
    doc.text_pos_at(node.range().start).row
}

struct Ctx<'a, 'input> {
    doc: &'a roxmltree::Document<'input>,
}

impl Ctx<'_, '_> {
    fn structure(&self, node: roxmltree::Node, reason: impl Into<String>) -> UrdfError {
        UrdfError::Structure {
            line: line_of(self.doc, node),
            reason: reason.into(),
        }
    }

    fn attr<'n>(&self, node: roxmltree::Node<'n, '_>, name: &str) -> Result<&'n str, UrdfError> {
        node.attribute(name).ok_or_else(|| {
            self.structure(node, format!("<{}> is missing attribute \"{name}\"", node.tag_name().name()))
        })
    }

    fn numbers(&self, node: roxmltree::Node, name: &str, n: usize) -> Result<Vec<f64>, UrdfError> {
        let raw = self.attr(node, name)?;
        let values: Result<Vec<f64>, _> = raw.split_whitespace().map(str::parse::<f64>).collect();
        match values {
            Ok(v) if v.len() == n && v.iter().all(|x| x.is_finite()) => Ok(v),
            _ => Err(self.structure(node, format!("attribute \"{name}\" must hold {n} finite numbers, got \"{raw}\""))),
        }
    }

    fn vec3_or_zero(&self, node: roxmltree::Node, name: &str) -> Result<Vec3, UrdfError> {
        if node.attribute(name).is_none() {
            return Ok(Vec3::zeros());
        }
        let v = self.numbers(node, name, 3)?;
        Ok(Vec3::new(v[0], v[1], v[2]))
    }

    fn origin(&self, parent: roxmltree::Node) -> Result<Origin, UrdfError> {
        match child(parent, "origin") {
            None => Ok(Origin::default()),
            Some(o) => Ok(Origin {
                xyz: self.vec3_or_zero(o, "xyz")?,
                rpy: self.vec3_or_zero(o, "rpy")?,
            }),
        }
    }

    fn geometry(&self, collision: roxmltree::Node) -> Result<Shape, UrdfError> {
        let geom = child(collision, "geometry")
            .ok_or_else(|| self.structure(collision, "<collision> without <geometry>"))?;
        let mut shapes = geom.children().filter(|n| n.is_element());
        let node = shapes
            .next()
            .ok_or_else(|| self.structure(geom, "empty <geometry>"))?;
        if shapes.next().is_some() {
            return Err(self.structure(geom, "<geometry> must hold exactly one shape"));
        }
        let shape = match node.tag_name().name() {
            "box" => {
                let s = self.numbers(node, "size", 3)?;
                Shape::Box {
                    size: Vec3::new(s[0], s[1], s[2]),
                }
            }
            "cylinder" => Shape::Cylinder {
                radius: self.numbers(node, "radius", 1)?[0],
                length: self.numbers(node, "length", 1)?[0],
            },
            "sphere" => Shape::Sphere {
                radius: self.numbers(node, "radius", 1)?[0],
            },
            other => {
                return Err(UrdfError::UnsupportedGeometry {
                    kind: other.to_string(),
                    line: line_of(self.doc, node),
                })
            }
        };
        if !shape.is_valid() {
            return Err(UrdfError::InvalidGeometry {
                line: line_of(self.doc, node),
                reason: format!("all dimensions must be positive: {shape:?}"),
            });
        }
        Ok(shape)
    }
}

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, tag: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children().find(|n| n.has_tag_name(tag))
}

impl UrdfModel {
    pub fn parse(text: &str) -> Result<Self, UrdfError> {
        let doc = roxmltree::Document::parse(text).map_err(|e| UrdfError::MalformedXml {
            line: e.pos().row,
            message: e.to_string(),
        })?;
        let ctx = Ctx { doc: &doc };
        let root = doc.root_element();
        if !root.has_tag_name("robot") {
            return Err(ctx.structure(root, format!("root element is <{}>, expected <robot>", root.tag_name().name())));
        }
        let name = root.attribute("name").unwrap_or("").to_string();
        let mut links = Vec::new();
        let mut joints = Vec::new();
        for node in root.children().filter(|n| n.is_element()) {
            match node.tag_name().name() {
                "link" => {
                    let mut collisions = Vec::new();
                    for c in node.children().filter(|n| n.has_tag_name("collision")) {
                        collisions.push(Collision {
                            origin: ctx.origin(c)?,
                            shape: ctx.geometry(c)?,
                        });
                    }
                    links.push(Link {
                        name: ctx.attr(node, "name")?.to_string(),
                        collisions,
                    });
                }
                "joint" => {
                    let kind = ctx.attr(node, "type")?;
                    if kind != "fixed" {
                        return Err(UrdfError::UnsupportedJoint {
                            kind: kind.to_string(),
                            line: line_of(&doc, node),
                        });
                    }
                    let link_ref = |tag: &str| -> Result<String, UrdfError> {
                        let n = child(node, tag)
                            .ok_or_else(|| ctx.structure(node, format!("joint without <{tag}>")))?;
                        Ok(ctx.attr(n, "link")?.to_string())
                    };
                    joints.push(Joint {
                        name: ctx.attr(node, "name")?.to_string(),
                        parent: link_ref("parent")?,
                        child: link_ref("child")?,
                        origin: ctx.origin(node)?,
                    });
                }
                // materials, transmissions, gazebo tags and the like
                _ => {}
            }
        }
        Ok(Self { name, links, joints })
    }

    /// Poses of every link relative to the root link, in link order.
    pub fn link_poses(&self) -> Result<Vec<Pose>, UrdfError> {
        let err = |reason: String| UrdfError::Structure { line: 0, reason };
        let index: HashMap<&str, usize> = self
            .links
            .iter()
            .enumerate()
            .map(|(i, l)| (l.name.as_str(), i))
            .collect();
        if index.len() != self.links.len() {
            return Err(err("duplicate link names".into()));
        }
        let mut children: Vec<Vec<(usize, Pose)>> = vec![Vec::new(); self.links.len()];
        let mut has_parent = vec![false; self.links.len()];
        for j in &self.joints {
            let (Some(&p), Some(&c)) = (index.get(j.parent.as_str()), index.get(j.child.as_str())) else {
                return Err(err(format!("joint \"{}\" references an unknown link", j.name)));
            };
            if has_parent[c] {
                return Err(err(format!("link \"{}\" has more than one parent", j.child)));
            }
            has_parent[c] = true;
            children[p].push((c, j.origin.pose()));
        }
        let roots: Vec<usize> = (0..self.links.len()).filter(|&i| !has_parent[i]).collect();
        if roots.len() != 1 {
            return Err(err(format!("expected exactly one root link, found {}", roots.len())));
        }
        let mut poses: Vec<Option<Pose>> = vec![None; self.links.len()];
        poses[roots[0]] = Some(Pose::default());
        let mut queue = VecDeque::from([roots[0]]);
        while let Some(i) = queue.pop_front() {
            let parent = poses[i].expect("queued links are posed");
            for (c, rel) in &children[i] {
                poses[*c] = Some(parent.compose(rel));
                queue.push_back(*c);
            }
        }
        poses
            .into_iter()
            .map(|p| p.ok_or_else(|| err("joint graph contains a cycle".into())))
            .collect()
    }

    /// Flattens the model into primitives expressed in the root link frame.
    pub fn primitives(&self) -> Result<Vec<Primitive>, UrdfError> {
        let poses = self.link_poses()?;
        let prims: Vec<Primitive> = self
            .links
            .iter()
            .zip(&poses)
            .flat_map(|(link, pose)| {
                link.collisions.iter().map(move |c| Primitive {
                    shape: c.shape,
                    pose: pose.compose(&c.origin.pose()),
                })
            })
            .collect();
        if prims.is_empty() {
            return Err(UrdfError::NoPrimitives);
        }
        Ok(prims)
    }

    /// Serializes to URDF text that [`UrdfModel::parse`] reads back exactly.
    pub fn to_urdf_string(&self) -> String {
        fn origin(o: &Origin) -> String {
            format!(
                "<origin xyz=\"{} {} {}\" rpy=\"{} {} {}\"/>",
                o.xyz.x, o.xyz.y, o.xyz.z, o.rpy.x, o.rpy.y, o.rpy.z
            )
        }
        let mut out = String::new();
        let _ = writeln!(out, "<?xml version=\"1.0\"?>");
        let _ = writeln!(out, "<robot name=\"{}\">", self.name);
        for link in &self.links {
            let _ = writeln!(out, "  <link name=\"{}\">", link.name);
            for c in &link.collisions {
                let geom = match c.shape {
                    Shape::Box { size } => format!("<box size=\"{} {} {}\"/>", size.x, size.y, size.z),
                    Shape::Cylinder { radius, length } => {
                        format!("<cylinder radius=\"{radius}\" length=\"{length}\"/>")
                    }
                    Shape::Sphere { radius } => format!("<sphere radius=\"{radius}\"/>"),
                };
                let _ = writeln!(out, "    <collision>");
                let _ = writeln!(out, "      {}", origin(&c.origin));
                let _ = writeln!(out, "      <geometry>{geom}</geometry>");
                let _ = writeln!(out, "    </collision>");
            }
            let _ = writeln!(out, "  </link>");
        }
        for j in &self.joints {
            let _ = writeln!(out, "  <joint name=\"{}\" type=\"fixed\">", j.name);
            let _ = writeln!(out, "    <parent link=\"{}\"/>", j.parent);
            let _ = writeln!(out, "    <child link=\"{}\"/>", j.child);
            let _ = writeln!(out, "    {}", origin(&j.origin));
            let _ = writeln!(out, "  </joint>");
        }
        let _ = writeln!(out, "</robot>");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BOX: &str = r#"<?xml version="1.0"?>
<robot name="crate">
  <link name="base">
    <visual><geometry><mesh filename="crate.dae"/></geometry></visual>
    <inertial><mass value="3"/></inertial>
    <collision><geometry><box size="1 2 3"/></geometry></collision>
  </link>
</robot>"#;

    #[test]
    fn single_box() {
        let prims = UrdfModel::parse(BOX).unwrap().primitives().unwrap();
        assert_eq!(prims.len(), 1);
        assert_eq!(prims[0].shape, Shape::Box { size: Vec3::new(1.0, 2.0, 3.0) });
        assert_eq!(prims[0].pose, Pose::default());
    }

    #[test]
    fn fixed_joint_offsets_child() {
        let text = r#"<robot name="pole">
  <link name="a"><collision><geometry><sphere radius="0.5"/></geometry></collision></link>
  <link name="b"><collision><origin xyz="0.5 0 0"/><geometry><cylinder radius="0.1" length="1"/></geometry></collision></link>
  <joint name="j" type="fixed"><parent link="a"/><child link="b"/><origin xyz="0 0 1" rpy="0 0 1.5707963267948966"/></joint>
</robot>"#;
        let prims = UrdfModel::parse(text).unwrap().primitives().unwrap();
        assert_eq!(prims.len(), 2);
        // joint: translate (0,0,1) then yaw 90°, so the collision's local +x offset maps to +y
        let expected = Vec3::new(0.0, 0.5, 1.0);
        assert!((prims[1].pose.translation - expected).norm() < 1e-12);
    }

    #[test]
    fn mesh_collision_is_unsupported() {
        let text = r#"<robot name="m">
  <link name="a"><collision><geometry><mesh filename="x.stl"/></geometry></collision></link>
</robot>"#;
        match UrdfModel::parse(text) {
            Err(UrdfError::UnsupportedGeometry { kind, line }) => {
                assert_eq!(kind, "mesh");
                assert_eq!(line, 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let zero = r#"<robot name="z"><link name="a"><collision><geometry><cylinder radius="0" length="1"/></geometry></collision></link></robot>"#;
        assert!(matches!(UrdfModel::parse(zero), Err(UrdfError::InvalidGeometry { .. })));
        assert!(matches!(UrdfModel::parse("<robot><link"), Err(UrdfError::MalformedXml { .. })));
        let revolute = r#"<robot name="r"><link name="a"/><link name="b"/>
<joint name="j" type="revolute"><parent link="a"/><child link="b"/></joint></robot>"#;
        assert!(matches!(UrdfModel::parse(revolute), Err(UrdfError::UnsupportedJoint { .. })));
        let empty = r#"<robot name="e"><link name="a"/></robot>"#;
        assert_eq!(UrdfModel::parse(empty).unwrap().primitives(), Err(UrdfError::NoPrimitives));
        let bad_num = r#"<robot name="b"><link name="a"><collision><geometry><box size="1 x 3"/></geometry></collision></link></robot>"#;
        assert!(matches!(UrdfModel::parse(bad_num), Err(UrdfError::Structure { .. })));
        let two_roots = r#"<robot name="t">
<link name="a"><collision><geometry><sphere radius="1"/></geometry></collision></link>
<link name="b"><collision><geometry><sphere radius="1"/></geometry></collision></link></robot>"#;
        assert!(UrdfModel::parse(two_roots).unwrap().primitives().is_err());
    }

    #[test]
    fn serialization_roundtrips() {
        let model = UrdfModel {
            name: "x".into(),
            links: vec![
                Link {
                    name: "a".into(),
                    collisions: vec![Collision {
                        origin: Origin { xyz: Vec3::new(0.1, 0.2, 1.0 / 3.0), rpy: Vec3::new(0.0, 0.3, -0.7) },
                        shape: Shape::Cylinder { radius: 0.123456789, length: 2.5 },
                    }],
                },
                Link {
                    name: "b".into(),
                    collisions: vec![Collision { origin: Origin::default(), shape: Shape::Sphere { radius: 1e-7 } }],
                },
            ],
            joints: vec![Joint {
                name: "j".into(),
                parent: "a".into(),
                child: "b".into(),
                origin: Origin { xyz: Vec3::new(0.0, 0.0, 2.5), rpy: Vec3::new(0.0, 0.1, 0.2) },
            }],
        };
        let parsed = UrdfModel::parse(&model.to_urdf_string()).unwrap();
        assert_eq!(parsed, model);
    }
}
