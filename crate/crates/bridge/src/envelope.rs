//! JSON envelopes exchanged over the websocket, one per text frame.
//!
//! ```text
//! {"op":"publish","channel":"MBOT_VEL_CMD","data":{"vx":0.0,"vy":0.0,"wz":0.0,"utime":0}}
//! {"op":"request","channel":"SLAM_MAP","as_bytes":true}
//! {"op":"response","channel":"ODOMETRY","utime":1200000,"data":{"x":0.5,"y":0.0,"theta":0.0,"utime":1200000}}
//! {"op":"error","channel":"LIDAR","msg":"no data"}
//! ```

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use mbot_core::bus::{Bus, BusError, BusMessage};
use mbot_core::messages::{
    EncoderReading, LidarScan, Path2D, PayloadKind, ResetRequest, SlamModeCommand, WheelCommand,
};
use mbot_core::{Channel, OccupancyGrid, Pose2D, Twist2D};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// Request-only channel: plan a path on the latest SLAM map.
pub const PLAN_REQUEST: &str = "PLAN_REQUEST";

/// Error text for a request on a channel that has never been published.
pub const NO_DATA: &str = "no data";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Subscribe,
    Unsubscribe,
    Publish,
    Request,
    Response,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub op: Op,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
    /// Bus time of the cached message a response carries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utime: Option<u64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub as_bytes: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msg: Option<String>,
}

impl Envelope {
    fn bare(op: Op, channel: impl Into<String>) -> Self {
        Self { op, channel: Some(channel.into()), data: None, utime: None, as_bytes: false, msg: None }
    }

    pub fn subscribe(channel: impl Into<String>) -> Self {
        Self::bare(Op::Subscribe, channel)
    }

    pub fn unsubscribe(channel: impl Into<String>) -> Self {
        Self::bare(Op::Unsubscribe, channel)
    }

    pub fn request(channel: impl Into<String>) -> Self {
        Self::bare(Op::Request, channel)
    }

    pub fn publish(channel: impl Into<String>, data: Value) -> Self {
        Self { data: Some(data), ..Self::bare(Op::Publish, channel) }
    }

    pub fn response(channel: impl Into<String>, utime: u64, data: Value) -> Self {
        Self { data: Some(data), utime: Some(utime), ..Self::bare(Op::Response, channel) }
    }

    pub fn error(channel: Option<&str>, msg: impl Into<String>) -> Self {
        Self {
            op: Op::Error,
            channel: channel.map(str::to_string),
            data: None,
            utime: None,
            as_bytes: false,
            msg: Some(msg.into()),
        }
    }

    pub fn with_as_bytes(mut self) -> Self {
        self.as_bytes = true;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("envelope serializes")
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("channel {channel} expects fields {expected:?}, got {got:?}")]
    Fields { channel: String, expected: Vec<&'static str>, got: Vec<String> },
    #[error("channel {channel}: {source}")]
    Json { channel: String, source: serde_json::Error },
    #[error("channel {channel}: data must be a JSON object")]
    NotAnObject { channel: String },
    #[error("channel {channel}: bad base64 cell data: {msg}")]
    Cells { channel: String, msg: String },
    #[error(transparent)]
    Bus(#[from] BusError),
}

/// Field names of the JSON object carried on channels of each payload kind.
pub fn schema_fields(kind: PayloadKind) -> &'static [&'static str] {
    match kind {
        PayloadKind::Twist => &["vx", "vy", "wz", "utime"],
        PayloadKind::Pose => &["x", "y", "theta", "utime"],
        PayloadKind::Scan => &["utime", "ranges", "thetas", "num_ranges"],
        PayloadKind::Grid => &["origin_x", "origin_y", "resolution", "width", "height", "cells"],
        PayloadKind::Path => &["utime", "poses"],
        PayloadKind::Mode => &["utime", "mode"],
        PayloadKind::Reset => &["utime"],
        PayloadKind::Encoders => &["utime", "ticks", "delta_time"],
        PayloadKind::Wheels => &["utime", "speeds"],
    }
}

/// Field names of a [`PlanRequestData`] object.
pub const PLAN_REQUEST_FIELDS: &[&str] = &["goal", "start"];

/// Body of a PLAN_REQUEST request. Without `start` the bridge plans from the
/// latest SLAM pose, or odometry when SLAM has not published.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanRequestData {
    pub goal: Pose2D,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Pose2D>,
}

fn check_fields(channel: &str, data: &Value, expected: &'static [&'static str]) -> Result<(), SchemaError> {
    let obj = data.as_object().ok_or_else(|| SchemaError::NotAnObject { channel: channel.to_string() })?;
    if obj.keys().all(|k| expected.contains(&k.as_str())) {
        Ok(())
    } else {
        Err(SchemaError::Fields {
            channel: channel.to_string(),
            expected: expected.to_vec(),
            got: obj.keys().cloned().collect(),
        })
    }
}

/// Decodes `data` as `T` after checking it carries no fields outside `expected`.
pub fn from_data<T: DeserializeOwned>(channel: &str, data: &Value, expected: &'static [&'static str]) -> Result<T, SchemaError> {
    check_fields(channel, data, expected)?;
    T::deserialize(data).map_err(|source| SchemaError::Json { channel: channel.to_string(), source })
}

/// Decodes a grid object whose `cells` is either an integer array or base64.
pub fn decode_grid(channel: &str, data: &Value) -> Result<OccupancyGrid, SchemaError> {
    check_fields(channel, data, schema_fields(PayloadKind::Grid))?;
    let mut obj = data.as_object().cloned().unwrap_or_default();
    if let Some(Value::String(b64)) = obj.get("cells") {
        let bytes = BASE64.decode(b64).map_err(|e| SchemaError::Cells { channel: channel.to_string(), msg: e.to_string() })?;
        obj.insert("cells".into(), Value::from(bytes.into_iter().map(|b| b as i8).collect::<Vec<i8>>()));
    }
    let grid: OccupancyGrid = from_data(channel, &Value::Object(obj), schema_fields(PayloadKind::Grid))?;
    grid.validate().map_err(|e| SchemaError::Cells { channel: channel.to_string(), msg: e.to_string() })?;
    Ok(grid)
}

/// Validates `data` against the channel schema and publishes it on `bus`.
pub fn publish_json(bus: &Bus, channel: Channel, data: &Value) -> Result<(), SchemaError> {
    let name = channel.name();
    let fields = schema_fields(channel.kind());
    match channel.kind() {
        PayloadKind::Twist => bus.publish(channel, &from_data::<Twist2D>(name, data, fields)?)?,
        PayloadKind::Pose => bus.publish(channel, &from_data::<Pose2D>(name, data, fields)?)?,
        PayloadKind::Scan => {
            let scan: LidarScan = from_data(name, data, fields)?;
            if !scan.is_consistent() {
                return Err(SchemaError::Fields {
                    channel: name.to_string(),
                    expected: fields.to_vec(),
                    got: vec!["ranges/thetas length differs from num_ranges".into()],
                });
            }
            bus.publish(channel, &scan)?
        }
        PayloadKind::Grid => bus.publish(channel, &decode_grid(name, data)?)?,
        PayloadKind::Path => bus.publish(channel, &from_data::<Path2D>(name, data, fields)?)?,
        PayloadKind::Mode => bus.publish(channel, &from_data::<SlamModeCommand>(name, data, fields)?)?,
        PayloadKind::Reset => bus.publish(channel, &from_data::<ResetRequest>(name, data, fields)?)?,
        PayloadKind::Encoders => bus.publish(channel, &from_data::<EncoderReading>(name, data, fields)?)?,
        PayloadKind::Wheels => bus.publish(channel, &from_data::<WheelCommand>(name, data, fields)?)?,
    }
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("payload serializes")
}

/// JSON object for a grid with its cells packed as base64 signed bytes.
pub fn grid_to_compact_json(grid: &OccupancyGrid) -> Value {
    let mut obj = Map::new();
    obj.insert("origin_x".into(), Value::from(grid.origin_x));
    obj.insert("origin_y".into(), Value::from(grid.origin_y));
    obj.insert("resolution".into(), Value::from(grid.resolution));
    obj.insert("width".into(), Value::from(grid.width));
    obj.insert("height".into(), Value::from(grid.height));
    let bytes: Vec<u8> = grid.cells.iter().map(|&c| c as u8).collect();
    obj.insert("cells".into(), Value::from(BASE64.encode(bytes)));
    Value::Object(obj)
}

/// Converts a bus message to its JSON object form.
pub fn message_to_json(msg: &BusMessage, as_bytes: bool) -> Result<Value, BusError> {
    Ok(match msg.channel.kind() {
        PayloadKind::Twist => to_value(&msg.decode::<Twist2D>()?),
        PayloadKind::Pose => to_value(&msg.decode::<Pose2D>()?),
        PayloadKind::Scan => to_value(&msg.decode::<LidarScan>()?),
        PayloadKind::Grid if as_bytes => grid_to_compact_json(&msg.decode::<OccupancyGrid>()?),
        PayloadKind::Grid => to_value(&msg.decode::<OccupancyGrid>()?),
        PayloadKind::Path => to_value(&msg.decode::<Path2D>()?),
        PayloadKind::Mode => to_value(&msg.decode::<SlamModeCommand>()?),
        PayloadKind::Reset => to_value(&msg.decode::<ResetRequest>()?),
        PayloadKind::Encoders => to_value(&msg.decode::<EncoderReading>()?),
        PayloadKind::Wheels => to_value(&msg.decode::<WheelCommand>()?),
    })
}

#[cfg(test)]
mod tests {
    use mbot_core::messages::SlamMode;
    use serde_json::json;

    use super::*;

    #[test]
    fn frozen_publish_example() {
        let e = Envelope::publish("MBOT_VEL_CMD", to_value(&Twist2D::zero()));
        assert_eq!(e.to_json(), r#"{"op":"publish","channel":"MBOT_VEL_CMD","data":{"vx":0.0,"vy":0.0,"wz":0.0,"utime":0}}"#);
        let back = Envelope::parse(&e.to_json()).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn error_and_request_shapes() {
        assert_eq!(Envelope::error(Some("LIDAR"), NO_DATA).to_json(), r#"{"op":"error","channel":"LIDAR","msg":"no data"}"#);
        assert_eq!(Envelope::request("SLAM_MAP").with_as_bytes().to_json(), r#"{"op":"request","channel":"SLAM_MAP","as_bytes":true}"#);
        assert_eq!(Envelope::subscribe("SLAM_POSE").to_json(), r#"{"op":"subscribe","channel":"SLAM_POSE"}"#);
    }

    #[test]
    fn rejects_unknown_ops_and_keys() {
        assert!(Envelope::parse(r#"{"op":"shout","channel":"X"}"#).is_err());
        assert!(Envelope::parse(r#"{"op":"publish","chanel":"X"}"#).is_err());
    }

    #[test]
    fn publish_validates_schema() {
        let bus = Bus::new();
        let sub = bus.subscribe(Channel::MbotVelCmd, 4).unwrap();
        publish_json(&bus, Channel::MbotVelCmd, &json!({"vx": 0, "vy": 0, "wz": 0})).unwrap();
        assert_eq!(sub.try_recv().unwrap().decode::<Twist2D>().unwrap(), Twist2D::zero());
        assert!(matches!(publish_json(&bus, Channel::MbotVelCmd, &json!({"vx": 0, "vy": 0})), Err(SchemaError::Json { .. })));
        assert!(matches!(
            publish_json(&bus, Channel::MbotVelCmd, &json!({"vx": 0, "vy": 0, "wz": 0, "speed": 1})),
            Err(SchemaError::Fields { .. })
        ));
        assert!(matches!(publish_json(&bus, Channel::MbotVelCmd, &json!([1, 2])), Err(SchemaError::NotAnObject { .. })));
        publish_json(&bus, Channel::SlamMode, &json!({"mode": "LOCALIZATION_ONLY"})).unwrap();
        assert_eq!(bus.latest_decoded::<SlamModeCommand>(Channel::SlamMode).unwrap().mode, SlamMode::LocalizationOnly);
    }

    #[test]
    fn compact_grid_round_trip() {
        let mut g = OccupancyGrid::new(-1.0, 2.5, 0.05, 3, 2).unwrap();
        g.cells = vec![-128, -1, 0, 1, 64, 127];
        let v = grid_to_compact_json(&g);
        assert!(v["cells"].is_string());
        assert_eq!(decode_grid("SLAM_MAP", &v).unwrap(), g);
        assert_eq!(decode_grid("SLAM_MAP", &to_value(&g)).unwrap(), g);
    }
}
