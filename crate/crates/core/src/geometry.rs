//! Mouth and microphone positions under horizontal head rotation.
//!
//! Coordinates are in cm. The head turns by `theta` degrees about a vertical
//! axis through the head centre; at `theta = 0` the mouth faces the
//! microphone along `-y`.

use std::ops::Sub;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        (*self - *other).norm()
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

impl Sub for Point3 {
    type Output = Point3;

    fn sub(self, rhs: Point3) -> Point3 {
        Point3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MicKind {
    /// Table-mounted; does not follow the head.
    Gooseneck,
    /// Held near the mouth; rotates with the head.
    Handheld,
}

/// Speaker and microphone arrangement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SceneRepr", into = "SceneRepr")]
pub struct Scene {
    /// Mouth position at `theta = 0`.
    pub origin: Point3,
    /// Head-centre-to-mouth radius.
    pub r1_cm: f64,
    pub mic_kind: MicKind,
    /// Initial mouth-to-microphone distance, `[10, 30]`.
    pub d_cm: f64,
    /// Gooseneck height adjustment, `[0, 30]`.
    pub h_cm: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneRepr {
    origin: [f64; 3],
    r1_cm: f64,
    mic_kind: MicKind,
    d_cm: f64,
    h_cm: f64,
}

impl TryFrom<SceneRepr> for Scene {
    type Error = Error;

    fn try_from(r: SceneRepr) -> Result<Scene> {
        Scene::new(
            Point3::new(r.origin[0], r.origin[1], r.origin[2]),
            r.r1_cm,
            r.mic_kind,
            r.d_cm,
            r.h_cm,
        )
    }
}

impl From<Scene> for SceneRepr {
    fn from(s: Scene) -> SceneRepr {
        SceneRepr {
            origin: [s.origin.x, s.origin.y, s.origin.z],
            r1_cm: s.r1_cm,
            mic_kind: s.mic_kind,
            d_cm: s.d_cm,
            h_cm: s.h_cm,
        }
    }
}

impl Default for Scene {
    fn default() -> Self {
        Scene::gooseneck(20.0, 0.0).expect("default scene is valid")
    }
}

fn check_theta(theta_deg: f64) -> Result<f64> {
    if (-180.0..=180.0).contains(&theta_deg) {
        Ok(theta_deg.to_radians())
    } else {
        Err(Error::param(format!(
            "head angle {theta_deg} deg outside [-180, 180]"
        )))
    }
}

impl Scene {
    pub fn new(
        origin: Point3,
        r1_cm: f64,
        mic_kind: MicKind,
        d_cm: f64,
        h_cm: f64,
    ) -> Result<Self> {
        ensure_positive("r1_cm", r1_cm)?;
        if !(10.0..=30.0).contains(&d_cm) {
            return Err(Error::param(format!("d_cm {d_cm} outside [10, 30]")));
        }
        if !(0.0..=30.0).contains(&h_cm) {
            return Err(Error::param(format!("h_cm {h_cm} outside [0, 30]")));
        }
        if ![origin.x, origin.y, origin.z].iter().all(|v| v.is_finite()) {
            return Err(Error::param("origin must be finite"));
        }
        Ok(Scene {
            origin,
            r1_cm,
            mic_kind,
            d_cm,
            h_cm,
        })
    }

    pub fn gooseneck(d_cm: f64, h_cm: f64) -> Result<Self> {
        Scene::new(Point3::default(), 10.0, MicKind::Gooseneck, d_cm, h_cm)
    }

    pub fn handheld(d_cm: f64) -> Result<Self> {
        Scene::new(Point3::default(), 10.0, MicKind::Handheld, d_cm, 0.0)
    }

    /// `sqrt(D^2 / 2)`: the horizontal and vertical mouth-to-mic offsets.
    fn half_diagonal(&self) -> f64 {
        (self.d_cm * self.d_cm / 2.0).sqrt()
    }

    /// Mouth position after turning the head by `theta_deg`.
    pub fn source_position(&self, theta_deg: f64) -> Result<Point3> {
        let t = check_theta(theta_deg)?;
        let o = self.origin;
        Ok(Point3::new(
            o.x + self.r1_cm * t.sin(),
            o.y + self.r1_cm * (1.0 - t.cos()),
            o.z,
        ))
    }

    fn gooseneck_position(&self) -> Point3 {
        let o = self.origin;
        let k = self.half_diagonal();
        Point3::new(o.x, o.y - k, o.z - k - self.h_cm)
    }

    /// Microphone position when the head is turned by `theta_deg`.
    pub fn mic_position(&self, theta_deg: f64) -> Result<Point3> {
        let t = check_theta(theta_deg)?;
        let fixed = self.gooseneck_position();
        match self.mic_kind {
            MicKind::Gooseneck => Ok(fixed),
            MicKind::Handheld => {
                let k = self.half_diagonal();
                let arm = k + self.r1_cm;
                Ok(Point3::new(
                    fixed.x + arm * t.sin(),
                    fixed.y + arm * (1.0 - t.cos()),
                    self.origin.z - k,
                ))
            }
        }
    }
}
