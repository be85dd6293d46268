use std::sync::Arc;

use super::{sphere_span, RadianceField, Ray, Shading};
use crate::fields::Owner;
use crate::geometry::{ClosestPointIndex, Vec3};

/// Closed-form scene without networks: the inside of a sphere of radius
/// `room_radius` as background, optionally composed with a mesh's exact
/// signed distance. Each branch has a constant color.
#[derive(Debug, Clone)]
pub struct AnalyticScene {
    pub room_radius: f64,
    pub object: Option<Arc<ClosestPointIndex>>,
    pub sharpness: f64,
    pub room_color: [f64; 3],
    pub object_color: [f64; 3],
}

impl AnalyticScene {
    pub fn room(room_radius: f64, sharpness: f64) -> Self {
        Self { room_radius, object: None, sharpness, room_color: [0.6, 0.5, 0.4], object_color: [0.1, 0.3, 0.9] }
    }

    pub fn with_object(mut self, object: Arc<ClosestPointIndex>) -> Self {
        self.object = Some(object);
        self
    }

    fn branches(&self, p: &Vec3) -> (f64, Option<f64>) {
        let room = self.room_radius - p.norm();
        (room, self.object.as_ref().map(|o| o.signed_distance(p).signed_distance))
    }

    /// First surface along `ray` by exact intersection: the object when
    /// it is hit inside the room, else the far room wall.
    pub fn raycast(&self, ray: &Ray) -> Option<(f64, Owner)> {
        let (t_in, t_out) = sphere_span(&ray.origin, &ray.direction, self.room_radius)?;
        if let Some(obj) = &self.object {
            if let Some(hit) = obj.raycast(&ray.origin, &ray.direction) {
                if hit.distance > t_in && hit.distance < t_out {
                    return Some((hit.distance, Owner::Object));
                }
            }
        }
        Some((t_out, Owner::Background))
    }
}

impl RadianceField for AnalyticScene {
    fn sharpness(&self) -> f64 {
        self.sharpness
    }

    fn sdf(&self, points: &[Vec3]) -> Vec<f64> {
        points
            .iter()
            .map(|p| match self.branches(p) {
                (room, Some(obj)) => room.min(obj),
                (room, None) => room,
            })
            .collect()
    }

    fn shade(&self, points: &[Vec3], _views: &[Vec3]) -> Shading {
        let mut out = Shading::default();
        for p in points {
            let (room, obj) = self.branches(p);
            let (sdf, owner) = match obj {
                Some(o) if o <= room => (o, Owner::Object),
                _ => (room, Owner::Background),
            };
            out.sdf.push(sdf);
            out.owner.push(owner);
            out.rgb.extend_from_slice(match owner {
                Owner::Object => &self.object_color,
                Owner::Background => &self.room_color,
            });
        }
        out
    }
}
