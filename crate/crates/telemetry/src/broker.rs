//! Minimal topic-routed pub/sub over TCP, plus an in-process bus.
//!
//! # Wire protocol
//!
//! Every message in either direction is one frame:
//!
//! ```text
//! offset  size  field
//! 0       4     len      u32 big-endian, number of bytes after this field
//! 4       1     kind     0x01 SUBSCRIBE, 0x02 PUBLISH, 0x03 DELIVER,
//!                        0x04 ACK, 0x05 NACK
//! 5       2     tlen     u16 big-endian topic length
//! 7       tlen  topic    UTF-8
//! 7+tlen  rest  payload  len - 3 - tlen bytes
//! ```
//!
//! `len` is at most [`MAX_FRAME`]. A client sends SUBSCRIBE (empty payload)
//! or PUBLISH. The broker answers each with ACK carrying the same topic;
//! for PUBLISH the ACK payload is a u32 big-endian count of subscribers the
//! message was delivered to. Malformed frames get a NACK whose payload is a
//! UTF-8 reason, and the connection is closed. Subscribers receive DELIVER
//! frames. A topic filter matches a topic exactly, or, if it ends in `/#`,
//! any topic starting with the part before `#`.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use thiserror::Error;

pub const DEFAULT_TOPIC: &str = "pharmachain/telemetry";
pub const MAX_FRAME: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameKind {
    Subscribe = 1,
    Publish = 2,
    Deliver = 3,
    Ack = 4,
    Nack = 5,
}

impl FrameKind {
    fn from_u8(b: u8) -> Option<Self> {
        Some(match b {
            1 => FrameKind::Subscribe,
            2 => FrameKind::Publish,
            3 => FrameKind::Deliver,
            4 => FrameKind::Ack,
            5 => FrameKind::Nack,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameKind,
    pub topic: String,
    pub payload: Vec<u8>,
}

#[derive(Debug, Error)]
pub enum BrokerError {
    #[error("broker unavailable: {0}")]
    Unavailable(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("broker refused: {0}")]
    Refused(String),
}

impl From<io::Error> for BrokerError {
    fn from(e: io::Error) -> Self {
        BrokerError::Unavailable(e.to_string())
    }
}

impl Frame {
    pub fn new(kind: FrameKind, topic: &str, payload: &[u8]) -> Self {
        Self {
            kind,
            topic: topic.to_string(),
            payload: payload.to_vec(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let len = 1 + 2 + self.topic.len() + self.payload.len();
        let mut out = Vec::with_capacity(4 + len);
        out.extend_from_slice(&(len as u32).to_be_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&(self.topic.len() as u16).to_be_bytes());
        out.extend_from_slice(self.topic.as_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Decodes the part of a frame after the length prefix.
    pub fn decode_body(body: &[u8]) -> Result<Self, BrokerError> {
        let proto = |m: &str| BrokerError::Protocol(m.to_string());
        if body.len() < 3 {
            return Err(proto("short frame"));
        }
        let kind = FrameKind::from_u8(body[0]).ok_or_else(|| proto("unknown frame kind"))?;
        let tlen = u16::from_be_bytes([body[1], body[2]]) as usize;
        if body.len() < 3 + tlen {
            return Err(proto("topic overruns frame"));
        }
        let topic = std::str::from_utf8(&body[3..3 + tlen])
            .map_err(|_| proto("topic not utf-8"))?
            .to_string();
        Ok(Frame {
            kind,
            topic,
            payload: body[3 + tlen..].to_vec(),
        })
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, BrokerError> {
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let len = u32::from_be_bytes(len) as usize;
        if len > MAX_FRAME {
            return Err(BrokerError::Protocol("frame too large".into()));
        }
        let mut body = vec![0; len];
        r.read_exact(&mut body)?;
        Self::decode_body(&body)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), BrokerError> {
        w.write_all(&self.encode())?;
        w.flush()?;
        Ok(())
    }
}

pub fn topic_matches(filter: &str, topic: &str) -> bool {
    match filter.strip_suffix('#') {
        Some(prefix) if prefix.is_empty() || prefix.ends_with('/') => topic.starts_with(prefix),
        _ => filter == topic,
    }
}

/// Anything a sensing node can publish to.
pub trait Publisher {
    /// Returns the number of subscribers reached.
    fn publish(&mut self, topic: &str, payload: &[u8]) -> Result<usize, BrokerError>;
}

type Subscribers = Arc<Mutex<Vec<(String, Sender<(String, Vec<u8>)>)>>>;

fn route(subs: &Subscribers, topic: &str, payload: &[u8]) -> usize {
    let mut subs = subs.lock().unwrap();
    let mut n = 0;
    subs.retain(|(filter, tx)| {
        if !topic_matches(filter, topic) {
            return true;
        }
        let alive = tx.send((topic.to_string(), payload.to_vec())).is_ok();
        n += alive as usize;
        alive
    });
    n
}

/// In-process broker with the same routing rules as the TCP broker.
#[derive(Clone, Default)]
pub struct Bus {
    subs: Subscribers,
}

impl Bus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn subscribe(&self, filter: &str) -> Receiver<(String, Vec<u8>)> {
        let (tx, rx) = mpsc::channel();
        self.subs.lock().unwrap().push((filter.to_string(), tx));
        rx
    }
}

impl Publisher for Bus {
    fn publish(&mut self, topic: &str, payload: &[u8]) -> Result<usize, BrokerError> {
        Ok(route(&self.subs, topic, payload))
    }
}

/// TCP broker running on background threads until dropped.
pub struct Broker {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    subs: Subscribers,
}

impl Broker {
    pub fn bind(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let subs: Subscribers = Arc::default();
        let (stop2, subs2) = (stop.clone(), subs.clone());
        thread::Builder::new()
            .name("broker-accept".into())
            .spawn(move || {
                for conn in listener.incoming() {
                    if stop2.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(conn) = conn else { continue };
                    let subs = subs2.clone();
                    thread::spawn(move || {
                        if let Err(e) = serve_connection(conn, subs) {
                            tracing::debug!("broker connection closed: {e}");
                        }
                    });
                }
            })?;
        Ok(Self { addr, stop, subs })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn subscriber_count(&self) -> usize {
        self.subs.lock().unwrap().len()
    }
}

impl Drop for Broker {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
    }
}

fn serve_connection(conn: TcpStream, subs: Subscribers) -> Result<(), BrokerError> {
    conn.set_nodelay(true)?;
    let mut reader = BufReader::new(conn.try_clone()?);
    let writer = Arc::new(Mutex::new(BufWriter::new(conn.try_clone()?)));
    loop {
        let frame = match Frame::read_from(&mut reader) {
            Ok(f) => f,
            Err(BrokerError::Protocol(m)) => {
                let _ = Frame::new(FrameKind::Nack, "", m.as_bytes()).write_to(&mut *writer.lock().unwrap());
                let _ = conn.shutdown(Shutdown::Both);
                return Err(BrokerError::Protocol(m));
            }
            Err(e) => return Err(e),
        };
        match frame.kind {
            FrameKind::Publish => {
                let n = route(&subs, &frame.topic, &frame.payload);
                Frame::new(FrameKind::Ack, &frame.topic, &(n as u32).to_be_bytes())
                    .write_to(&mut *writer.lock().unwrap())?;
            }
            FrameKind::Subscribe => {
                let (tx, rx) = mpsc::channel::<(String, Vec<u8>)>();
                subs.lock().unwrap().push((frame.topic.clone(), tx));
                Frame::new(FrameKind::Ack, &frame.topic, &[]).write_to(&mut *writer.lock().unwrap())?;
                let w = writer.clone();
                thread::spawn(move || {
                    for (topic, payload) in rx {
                        let f = Frame::new(FrameKind::Deliver, &topic, &payload);
                        if f.write_to(&mut *w.lock().unwrap()).is_err() {
                            break;
                        }
                    }
                });
            }
            _ => {
                let m = "unexpected frame kind from client";
                let _ = Frame::new(FrameKind::Nack, "", m.as_bytes()).write_to(&mut *writer.lock().unwrap());
                return Err(BrokerError::Protocol(m.into()));
            }
        }
    }
}

/// Publishing connection to a TCP broker. Reconnects lazily.
pub struct BrokerClient {
    addr: SocketAddr,
    conn: Option<(BufReader<TcpStream>, BufWriter<TcpStream>)>,
    timeout: Duration,
}

impl BrokerClient {
    pub fn new(addr: SocketAddr) -> Self {
        Self {
            addr,
            conn: None,
            timeout: Duration::from_secs(2),
        }
    }

    fn connect(&mut self) -> Result<&mut (BufReader<TcpStream>, BufWriter<TcpStream>), BrokerError> {
        if self.conn.is_none() {
            let s = TcpStream::connect_timeout(&self.addr, self.timeout)?;
            s.set_nodelay(true)?;
            s.set_read_timeout(Some(self.timeout))?;
            self.conn = Some((BufReader::new(s.try_clone()?), BufWriter::new(s)));
        }
        Ok(self.conn.as_mut().expect("just connected"))
    }

    fn request(&mut self, frame: Frame) -> Result<Frame, BrokerError> {
        let result = (|| {
            let (r, w) = self.connect()?;
            frame.write_to(w)?;
            Frame::read_from(r)
        })();
        if result.is_err() {
            self.conn = None;
        }
        match result? {
            f if f.kind == FrameKind::Ack => Ok(f),
            f if f.kind == FrameKind::Nack => Err(BrokerError::Refused(String::from_utf8_lossy(&f.payload).into())),
            _ => Err(BrokerError::Protocol("expected ACK".into())),
        }
    }

    /// Opens a dedicated connection receiving messages matching `filter`.
    pub fn subscribe(addr: SocketAddr, filter: &str) -> Result<Subscription, BrokerError> {
        let s = TcpStream::connect(addr)?;
        s.set_nodelay(true)?;
        let mut w = BufWriter::new(s.try_clone()?);
        let mut r = BufReader::new(s.try_clone()?);
        Frame::new(FrameKind::Subscribe, filter, &[]).write_to(&mut w)?;
        match Frame::read_from(&mut r)? {
            f if f.kind == FrameKind::Ack => Ok(Subscription { reader: r, stream: s }),
            _ => Err(BrokerError::Protocol("subscribe not acknowledged".into())),
        }
    }
}

impl Publisher for BrokerClient {
    fn publish(&mut self, topic: &str, payload: &[u8]) -> Result<usize, BrokerError> {
        let ack = self.request(Frame::new(FrameKind::Publish, topic, payload))?;
        let n: [u8; 4] = ack
            .payload
            .as_slice()
            .try_into()
            .map_err(|_| BrokerError::Protocol("bad ACK payload".into()))?;
        Ok(u32::from_be_bytes(n) as usize)
    }
}

pub struct Subscription {
    reader: BufReader<TcpStream>,
    stream: TcpStream,
}

impl Subscription {
    /// Blocks for the next delivered `(topic, payload)`.
    pub fn recv(&mut self) -> Result<(String, Vec<u8>), BrokerError> {
        loop {
            let f = Frame::read_from(&mut self.reader)?;
            if f.kind == FrameKind::Deliver {
                return Ok((f.topic, f.payload));
            }
        }
    }

    pub fn set_timeout(&self, t: Option<Duration>) -> io::Result<()> {
        self.stream.set_read_timeout(t)
    }
}

impl Iterator for Subscription {
    type Item = (String, Vec<u8>);

    fn next(&mut self) -> Option<Self::Item> {
        self.recv().ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_layout_is_exact() {
        let f = Frame::new(FrameKind::Publish, "a/b", b"xy");
        assert_eq!(
            f.encode(),
            vec![0, 0, 0, 8, 2, 0, 3, b'a', b'/', b'b', b'x', b'y']
        );
        assert_eq!(Frame::read_from(&mut f.encode().as_slice()).unwrap(), f);
        assert!(Frame::decode_body(&[9, 0, 0]).is_err());
        assert!(Frame::decode_body(&[2, 0, 5, b'a']).is_err());
    }

    #[test]
    fn filters() {
        assert!(topic_matches("pharmachain/telemetry", "pharmachain/telemetry"));
        assert!(!topic_matches("pharmachain/telemetry", "pharmachain/telemetry/x"));
        assert!(topic_matches("pharmachain/#", "pharmachain/telemetry"));
        assert!(topic_matches("#", "anything"));
        assert!(!topic_matches("pharma#", "pharmachain"));
    }

    #[test]
    fn bus_routes_by_topic() {
        let mut bus = Bus::new();
        let a = bus.subscribe(DEFAULT_TOPIC);
        let b = bus.subscribe("other");
        assert_eq!(bus.publish(DEFAULT_TOPIC, b"m").unwrap(), 1);
        assert_eq!(a.try_recv().unwrap().1, b"m");
        assert!(b.try_recv().is_err());
    }

    #[test]
    fn tcp_round_trip() {
        let broker = Broker::bind("127.0.0.1:0").unwrap();
        let mut sub = BrokerClient::subscribe(broker.local_addr(), DEFAULT_TOPIC).unwrap();
        sub.set_timeout(Some(Duration::from_secs(5))).unwrap();
        let mut client = BrokerClient::new(broker.local_addr());
        assert_eq!(client.publish(DEFAULT_TOPIC, b"hello").unwrap(), 1);
        assert_eq!(client.publish("elsewhere", b"x").unwrap(), 0);
        assert_eq!(sub.recv().unwrap(), (DEFAULT_TOPIC.to_string(), b"hello".to_vec()));
    }

    #[test]
    fn unreachable_broker_errors() {
        let addr = {
            let l = TcpListener::bind("127.0.0.1:0").unwrap();
            l.local_addr().unwrap()
        };
        let mut c = BrokerClient::new(addr);
        assert!(matches!(c.publish("t", b"x"), Err(BrokerError::Unavailable(_))));
    }
}
