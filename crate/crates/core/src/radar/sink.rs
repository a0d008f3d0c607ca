use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::net::{SocketAddr, UdpSocket};
use std::path::Path;
use std::sync::{Arc, Mutex};

pub const DEFAULT_MULTICAST: &str = "239.0.0.120:12120";

/// Destination for encoded datagrams.
pub trait DatagramSink: Send {
    fn send(&mut self, datagram: &[u8]) -> std::io::Result<()>;

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

pub struct UdpSink {
    socket: UdpSocket,
    target: SocketAddr,
}

impl UdpSink {
    pub fn new(target: SocketAddr) -> std::io::Result<Self> {
        let bind: SocketAddr = if target.is_ipv4() { "0.0.0.0:0" } else { "[::]:0" }.parse().expect("literal");
        let socket = UdpSocket::bind(bind)?;
        if target.ip().is_multicast() && target.is_ipv4() {
            socket.set_multicast_ttl_v4(1)?;
        }
        socket.set_nonblocking(true)?;
        Ok(Self { socket, target })
    }
}

impl DatagramSink for UdpSink {
    fn send(&mut self, datagram: &[u8]) -> std::io::Result<()> {
        let n = self.socket.send_to(datagram, self.target)?;
        if n != datagram.len() {
            return Err(std::io::Error::other(format!("short send: {n} of {}", datagram.len())));
        }
        Ok(())
    }
}

/// Capture file of `u32` little-endian length-prefixed records.
pub struct FileSink {
    out: BufWriter<File>,
}

impl FileSink {
    pub fn create(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self {
            out: BufWriter::new(File::create(path)?),
        })
    }
}

impl DatagramSink for FileSink {
    fn send(&mut self, datagram: &[u8]) -> std::io::Result<()> {
        self.out.write_all(&(datagram.len() as u32).to_le_bytes())?;
        self.out.write_all(datagram)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

/// Reads every record of a capture file.
pub fn read_capture(mut r: impl Read) -> std::io::Result<Vec<Vec<u8>>> {
    let mut out = Vec::new();
    loop {
        let mut len = [0u8; 4];
        match r.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(out),
            Err(e) => return Err(e),
        }
        let mut payload = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut payload)?;
        out.push(payload);
    }
}

/// In-process capture; clones share the same buffer.
#[derive(Debug, Clone, Default)]
pub struct MemorySink {
    datagrams: Arc<Mutex<Vec<Vec<u8>>>>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn datagrams(&self) -> Vec<Vec<u8>> {
        self.datagrams.lock().expect("sink lock").clone()
    }

    pub fn len(&self) -> usize {
        self.datagrams.lock().expect("sink lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl DatagramSink for MemorySink {
    fn send(&mut self, datagram: &[u8]) -> std::io::Result<()> {
        self.datagrams.lock().expect("sink lock").push(datagram.to_vec());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capture_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cap.bin");
        let mut s = FileSink::create(&path).unwrap();
        s.send(&[1, 2, 3]).unwrap();
        s.send(&[]).unwrap();
        s.send(&[9; 28]).unwrap();
        s.flush().unwrap();
        let got = read_capture(File::open(&path).unwrap()).unwrap();
        assert_eq!(got, vec![vec![1, 2, 3], vec![], vec![9; 28]]);
    }

    #[test]
    fn truncated_capture_is_an_error() {
        let bytes = [5u8, 0, 0, 0, 1, 2];
        assert!(read_capture(&bytes[..]).is_err());
    }

    #[test]
    fn udp_loopback() {
        let rx = UdpSocket::bind("127.0.0.1:0").unwrap();
        rx.set_read_timeout(Some(std::time::Duration::from_secs(2))).unwrap();
        let mut tx = UdpSink::new(rx.local_addr().unwrap()).unwrap();
        tx.send(b"CRSN").unwrap();
        let mut buf = [0u8; 64];
        let (n, _) = rx.recv_from(&mut buf).unwrap();
        assert_eq!(&buf[..n], b"CRSN");
    }
}
