//! The command service over its two transports: WebSocket at `/ws` and
//! NDJSON on a local socket, plus the static console page.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use gyrocond::service::{ServeOptions, Server};
use gyrocond_core::SimConfig;
use serde_json::{json, Value};
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpStream, UnixStream};
use tokio::time::timeout;
use tokio_tungstenite::tungstenite::Message;

const WAIT: Duration = Duration::from_secs(20);

async fn start() -> (SocketAddr, PathBuf, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let socket = dir.path().join("gyrocond.sock");
    let server = Server::bind(ServeOptions {
        host: "127.0.0.1".into(),
        port: 0,
        socket: Some(socket.clone()),
        sim: SimConfig::default(),
    })
    .await
    .unwrap();
    let addr = server.local_addr().unwrap();
    tokio::spawn(server.run());
    (addr, socket, dir)
}

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<TcpStream>>;

struct WsClient {
    ws: Ws,
    frames: Vec<Value>,
}

impl WsClient {
    async fn connect(addr: SocketAddr) -> Self {
        let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
        Self { ws, frames: Vec::new() }
    }

    async fn send_raw(&mut self, text: &str) {
        self.ws.send(Message::Text(text.to_string().into())).await.unwrap();
    }

    async fn next(&mut self) -> Value {
        loop {
            let msg = timeout(WAIT, self.ws.next()).await.expect("no message").unwrap().unwrap();
            if let Message::Text(t) = msg {
                return serde_json::from_str(t.as_str()).unwrap();
            }
        }
    }

    /// Next response; frames arriving meanwhile are kept.
    async fn response(&mut self) -> Value {
        loop {
            let v = self.next().await;
            if v["event"] == "frame" {
                self.frames.push(v);
            } else {
                return v;
            }
        }
    }

    async fn call(&mut self, id: Value, op: &str, args: Value) -> Value {
        let req = json!({"v": 1, "id": id, "op": op, "args": args});
        self.send_raw(&req.to_string()).await;
        let resp = self.response().await;
        assert_eq!(resp["id"], id, "{resp}");
        resp
    }

    async fn wait_ready(&mut self) {
        for k in 0..400 {
            let s = self.call(json!(format!("ready-{k}")), "get_status", json!({})).await;
            if s["result"]["status"]["ready"] == true {
                return;
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        panic!("service never reported ready");
    }
}

fn error_code(resp: &Value) -> &str {
    assert_eq!(resp["ok"], false, "{resp}");
    resp["error"]["code"].as_str().unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn console_page_is_served() {
    let (addr, _socket, _dir) = start().await;
    for path in ["/", "/index.html"] {
        let mut tcp = TcpStream::connect(addr).await.unwrap();
        let req = format!("GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n");
        tcp.write_all(req.as_bytes()).await.unwrap();
        let mut body = String::new();
        timeout(WAIT, tcp.read_to_string(&mut body)).await.unwrap().unwrap();
        assert!(body.starts_with("HTTP/1.1 200"), "{path}: {body}");
        assert!(body.contains("text/html"));
        assert!(body.contains("/ws"));
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn manifest_lists_registers_taps_and_ops() {
    let (addr, _socket, _dir) = start().await;
    let mut c = WsClient::connect(addr).await;
    let r = c.call(json!(1), "get_manifest", json!({})).await;
    assert_eq!(r["ok"], true);
    assert_eq!(r["v"], 1);
    let m = &r["result"];
    let names: Vec<&str> = m["registers"].as_array().unwrap().iter().map(|e| e["name"].as_str().unwrap()).collect();
    for reg in ["STATUS", "PLL_KP", "AGC_SETPOINT", "COMP_G0", "WDT_TIMEOUT_MS"] {
        assert!(names.contains(&reg), "{reg} missing");
    }
    let taps: Vec<&str> = m["taps"].as_array().unwrap().iter().map(|t| t["name"].as_str().unwrap()).collect();
    for tap in ["primary_pickoff_adc", "nco_fw", "output_volts", "x1", "x2"] {
        assert!(taps.contains(&tap), "{tap} missing");
    }
    assert_eq!(m["ops"].as_array().unwrap().len(), 11);
}

#[tokio::test(flavor = "multi_thread")]
async fn errors_keep_the_connection_open() {
    let (addr, _socket, _dir) = start().await;
    let mut c = WsClient::connect(addr).await;

    c.send_raw("{not json").await;
    assert_eq!(error_code(&c.response().await), "malformed");

    let r = c.call(json!("a"), "write_reg", json!({"name": "STATUS", "value": 1})).await;
    assert_eq!(error_code(&r), "read-only");
    let r = c.call(json!("b"), "teleport", json!({})).await;
    assert_eq!(error_code(&r), "unknown-op");
    let r = c.call(json!("c"), "read_reg", json!({"name": "NOPE"})).await;
    assert_eq!(error_code(&r), "unknown-register");
    let r = c.call(json!("d"), "write_reg", json!({"name": "PGA_PRIMARY", "value": 9})).await;
    assert_eq!(error_code(&r), "width");
    let r = c.call(json!("e"), "write_reg", json!({"name": "AGC_SETPOINT", "real": 0.0})).await;
    assert_eq!(error_code(&r), "rejected");
    let r = c.call(json!("f"), "subscribe_tap", json!({"tap": "nope"})).await;
    assert_eq!(error_code(&r), "unknown-tap");
    let r = c.call(json!("g"), "capture", json!({"tap": "output_volts", "count": 40000})).await;
    assert_eq!(error_code(&r), "capacity");

    c.send_raw(r#"{"v": 2, "id": "h", "op": "get_status"}"#).await;
    assert_eq!(error_code(&c.response().await), "version");

    let r = c.call(json!("a"), "get_status", json!({})).await;
    assert_eq!(error_code(&r), "duplicate-id");

    let r = c.call(json!("i"), "get_status", json!({})).await;
    assert_eq!(r["ok"], true);
}

#[tokio::test(flavor = "multi_thread")]
async fn register_trim_is_read_back() {
    let (addr, _socket, _dir) = start().await;
    let mut c = WsClient::connect(addr).await;
    let r = c.call(json!(1), "write_reg", json!({"name": "PLL_KP", "real": 120.0})).await;
    assert_eq!(r["ok"], true, "{r}");
    assert_eq!(r["result"]["value"], 120.0f32.to_bits());
    let r = c.call(json!(2), "read_reg", json!({"name": "PLL_KP"})).await;
    assert_eq!(r["result"]["value"], 120.0f32.to_bits());
    let r = c.call(json!(3), "selfcheck", json!({"seed": 4})).await;
    assert_eq!(r["result"]["pass"], true);
}

#[tokio::test(flavor = "multi_thread")]
async fn subscribed_null_streams_near_midscale() {
    let (addr, _socket, _dir) = start().await;
    let mut c = WsClient::connect(addr).await;
    c.wait_ready().await;
    let r = c.call(json!("sub"), "subscribe_tap", json!({"tap": "output_volts"})).await;
    assert_eq!(r["result"]["fs"], 1000.0);
    let mut samples = Vec::new();
    while samples.len() < 200 {
        let f = if let Some(f) = c.frames.pop() { f } else { c.next().await };
        assert_eq!(f["event"], "frame", "{f}");
        assert_eq!(f["tap"], "output_volts");
        let (scale, offset) = (f["scale"].as_f64().unwrap(), f["offset"].as_f64().unwrap());
        for code in f["codes"].as_array().unwrap() {
            samples.push(offset + scale * code.as_f64().unwrap());
        }
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    assert!((mean - 2.5).abs() < 0.01, "null {mean} V");

    let r = c.call(json!("unsub"), "unsubscribe_tap", json!({"tap": "output_volts"})).await;
    assert_eq!(r["result"]["subscribed"], true);
}

#[tokio::test(flavor = "multi_thread")]
async fn ndjson_socket_speaks_the_same_protocol() {
    let (_addr, socket, _dir) = start().await;
    let stream = UnixStream::connect(&socket).await.unwrap();
    let (read, mut write) = stream.into_split();
    let mut lines = BufReader::new(read).lines();
    let mut call = async |line: String| {
        write.write_all(format!("{line}\n").as_bytes()).await.unwrap();
        let text = timeout(WAIT, lines.next_line()).await.unwrap().unwrap().unwrap();
        serde_json::from_str::<Value>(&text).unwrap()
    };
    let r = call(json!({"id": 1, "op": "get_manifest"}).to_string()).await;
    assert_eq!(r["ok"], true);
    let r = call("[]".to_string()).await;
    assert_eq!(r["error"]["code"], "malformed");
    let r = call(json!({"id": 2, "op": "capture", "args": {"tap": "nco_fw", "count": 50, "decimation": 10}}).to_string()).await;
    assert_eq!(r["ok"], true, "{r}");
    assert_eq!(r["result"]["codes"].as_array().unwrap().len(), 50);
    let r = call(json!({"id": 3, "op": "set_environment", "args": {"rate_dps": 10.0, "temperature": 60.0}}).to_string()).await;
    assert_eq!(r["result"]["temperature"], 60.0);
    let r = call(json!({"id": 4, "op": "set_environment", "args": {"temperature": 400.0}}).to_string()).await;
    assert_eq!(r["error"]["code"], "bad-args");
    let r = call(json!({"id": 5, "op": "reset"}).to_string()).await;
    assert_eq!(r["ok"], true);
}

#[tokio::test(flavor = "multi_thread")]
async fn scenarios_run_through_the_service() {
    let (addr, _socket, _dir) = start().await;
    let mut c = WsClient::connect(addr).await;
    let r = c.call(json!(1), "run_scenario", json!({"scenario": "lock", "seed": 1})).await;
    assert_eq!(r["ok"], true, "{r}");
    let report = &r["result"]["report"];
    assert_eq!(report["pass"], true);
    let turn_on = report["metrics"]
        .as_array()
        .unwrap()
        .iter()
        .find(|m| m["name"] == "turn_on_time_ms")
        .unwrap();
    assert!(turn_on["value"].as_f64().unwrap() <= 500.0);
    let r = c.call(json!(2), "run_scenario", json!({"scenario": "noise", "seed": 1, "duration_s": 1.0})).await;
    assert_eq!(error_code(&r), "scenario-failed");
    let r = c.call(json!(3), "run_scenario", json!({"scenario": "lock"})).await;
    assert_eq!(error_code(&r), "bad-args");
}
