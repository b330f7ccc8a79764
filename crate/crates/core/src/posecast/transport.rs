use std::io::ErrorKind;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use super::clock::{monotonic_ns, SyncSample};
use super::mailbox::Mailbox;
use super::wire::{self, Message, PoseFrame, WireError};
use super::PosecastError;

pub const DEFAULT_PORT: u16 = 9870;
const MAX_DATAGRAM: usize = 65_536;
const POLL: Duration = Duration::from_millis(20);
/// Offset of `t_send_ns` inside the frame header.
const SEND_STAMP_AT: usize = 18;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BroadcastStats {
    pub frames: u64,
    pub datagrams_sent: u64,
    pub dropped: u64,
}

/// Sends each frame immediately to every peer; a datagram that cannot go out
/// right now is dropped, never queued.
#[derive(Debug)]
pub struct Broadcaster {
    socket: UdpSocket,
    peers: Vec<SocketAddr>,
    buf: Vec<u8>,
    stats: BroadcastStats,
}

impl Broadcaster {
    pub fn bind<A: ToSocketAddrs>(bind: A, peers: Vec<SocketAddr>) -> Result<Self, PosecastError> {
        let socket = UdpSocket::bind(bind)?;
        socket.set_nonblocking(true)?;
        // Lets a peer list contain a subnet broadcast address.
        socket.set_broadcast(true)?;
        Ok(Self {
            socket,
            peers,
            buf: Vec::with_capacity(wire::FRAME_HEADER_LEN + wire::BODY_RECORD_LEN * 8),
            stats: BroadcastStats::default(),
        })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.socket.local_addr()
    }

    pub fn peers(&self) -> &[SocketAddr] {
        &self.peers
    }

    pub fn add_peer(&mut self, peer: SocketAddr) {
        if !self.peers.contains(&peer) {
            self.peers.push(peer);
        }
    }

    /// Encodes and sends `frame`, stamping `t_send_ns` right before
    /// transmission. Returns the send stamp.
    pub fn send(&mut self, frame: &mut PoseFrame) -> Result<u64, WireError> {
        frame.t_send_ns = 0;
        wire::encode_pose_frame_into(frame, &mut self.buf)?;
        let t_send = monotonic_ns();
        self.buf[SEND_STAMP_AT..SEND_STAMP_AT + 8].copy_from_slice(&t_send.to_le_bytes());
        frame.t_send_ns = t_send;
        self.stats.frames += 1;
        for peer in &self.peers {
            match self.socket.send_to(&self.buf, peer) {
                Ok(_) => self.stats.datagrams_sent += 1,
                Err(e) => {
                    self.stats.dropped += 1;
                    if e.kind() != ErrorKind::WouldBlock {
                        log::warn!("send to {peer} failed: {e}");
                    }
                }
            }
        }
        Ok(t_send)
    }

    pub fn stats(&self) -> BroadcastStats {
        self.stats
    }
}

/// Background thread owning a socket until dropped or stopped.
#[derive(Debug)]
pub struct Worker {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
    local: SocketAddr,
}

impl Worker {
    pub fn local_addr(&self) -> SocketAddr {
        self.local
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn spawn_loop<F>(socket: UdpSocket, name: &str, mut on_datagram: F) -> Result<Worker, PosecastError>
where
    F: FnMut(&UdpSocket, &[u8], SocketAddr, u64) + Send + 'static,
{
    socket.set_read_timeout(Some(POLL))?;
    let local = socket.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let handle = std::thread::Builder::new().name(name.into()).spawn(move || {
        let mut buf = vec![0u8; MAX_DATAGRAM];
        while !flag.load(Ordering::Relaxed) {
            match socket.recv_from(&mut buf) {
                Ok((n, from)) => {
                    let t = monotonic_ns();
                    on_datagram(&socket, &buf[..n], from, t);
                }
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                Err(e) => log::warn!("receive failed: {e}"),
            }
        }
    })?;
    Ok(Worker {
        stop,
        handle: Some(handle),
        local,
    })
}

/// Receives pose frames into `mailbox` on a background thread.
pub fn spawn_subscriber(socket: UdpSocket, mailbox: Arc<Mailbox>) -> Result<Worker, PosecastError> {
    spawn_loop(socket, "posecast-sub", move |_, bytes, from, t| match wire::decode_pose_frame(bytes) {
        Ok(frame) => {
            mailbox.offer(frame, t);
        }
        Err(e) => {
            mailbox.note_decode_error();
            log::debug!("dropping datagram from {from}: {e}");
        }
    })
}

/// Answers time-sync requests with this process's monotonic clock.
pub fn spawn_time_server(socket: UdpSocket) -> Result<Worker, PosecastError> {
    spawn_loop(socket, "posecast-time", |sock, bytes, from, _| {
        if let Ok(Message::TimeRequest { t_client }) = wire::decode_message(bytes) {
            let reply = wire::encode_time_response(t_client, monotonic_ns());
            if let Err(e) = sock.send_to(&reply, from) {
                log::warn!("time-sync reply to {from} failed: {e}");
            }
        }
    })
}

/// One time-sync exchange over UDP; `None` on timeout or a mismatched reply.
pub fn udp_sync_exchange(socket: &UdpSocket, server: SocketAddr, timeout: Duration) -> Option<SyncSample> {
    socket.set_read_timeout(Some(timeout)).ok()?;
    let t_request = monotonic_ns();
    socket.send_to(&wire::encode_time_request(t_request), server).ok()?;
    let mut buf = [0u8; 64];
    loop {
        let (n, from) = socket.recv_from(&mut buf).ok()?;
        let t_response = monotonic_ns();
        if from != server {
            continue;
        }
        if let Ok(Message::TimeResponse { t_client, t_server }) = wire::decode_message(&buf[..n]) {
            if t_client == t_request {
                return Some(SyncSample {
                    t_request,
                    t_server,
                    t_response,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posecast::clock::estimate_clock_offset;
    use crate::posecast::wire::BodyPose;
    use std::time::Instant;

    fn frame(id: u32) -> PoseFrame {
        PoseFrame {
            frame_id: id,
            t_capture_ns: 1,
            t_send_ns: 0,
            bodies: vec![BodyPose {
                body_id: 1,
                status: 0,
                position: [0.0, 1.0, 2.0],
                orientation: [1.0, 0.0, 0.0, 0.0],
                residual: 0.0,
            }],
        }
    }

    #[test]
    fn no_peers_is_fine() {
        let mut b = Broadcaster::bind("127.0.0.1:0", vec![]).unwrap();
        b.send(&mut frame(1)).unwrap();
        assert_eq!(b.stats().frames, 1);
        assert_eq!(b.stats().datagrams_sent, 0);
    }

    #[test]
    fn loopback_delivery() {
        let mailbox = Arc::new(Mailbox::new());
        let sub = spawn_subscriber(UdpSocket::bind("127.0.0.1:0").unwrap(), mailbox.clone()).unwrap();
        let mut b = Broadcaster::bind("127.0.0.1:0", vec![sub.local_addr()]).unwrap();
        let mut f = frame(42);
        let t_send = b.send(&mut f).unwrap();
        let got = mailbox.wait_newer(None, Duration::from_secs(2)).expect("frame arrives");
        assert_eq!(got.frame.frame_id, 42);
        assert_eq!(got.frame.t_send_ns, t_send);
        assert_eq!(got.frame.bodies, f.bodies);
        assert!(got.received_ns >= t_send);

        // Garbage is counted, not fatal.
        let raw = UdpSocket::bind("127.0.0.1:0").unwrap();
        raw.send_to(b"HOLO\x02\x00", sub.local_addr()).unwrap();
        let t0 = Instant::now();
        while mailbox.counters().decode_errors == 0 && t0.elapsed() < Duration::from_secs(2) {
            std::thread::sleep(Duration::from_millis(5));
        }
        assert_eq!(mailbox.counters().decode_errors, 1);
        sub.stop();
    }

    #[test]
    fn time_sync_over_loopback() {
        let server = spawn_time_server(UdpSocket::bind("127.0.0.1:0").unwrap()).unwrap();
        let client = UdpSocket::bind("127.0.0.1:0").unwrap();
        let off = estimate_clock_offset(
            || udp_sync_exchange(&client, server.local_addr(), Duration::from_millis(500)),
            8,
        )
        .unwrap();
        // Same process, same clock.
        assert!(off.offset_ns.abs() <= off.round_trip_ns as i64 / 2 + 1_000_000);
    }
}
