use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::path::Path;

use thiserror::Error;

use super::wire::{encode_datagram, encode_trace_record_into, TRACE_MAGIC};
use crate::model::RobotModel;
use crate::retarget::JointCommand;
use crate::validate::{IncrementalValidator, Thresholds, ValidationReport};

#[derive(Debug, Error)]
pub enum SinkError {
    /// A single delivery failed; the loop counts it and keeps going.
    #[error("send failed: {0}")]
    Send(io::Error),
    /// The destination is unusable; the loop stops.
    #[error("sink failed: {0}")]
    Fatal(io::Error),
}

/// Destination for emitted commands. Called only from the loop thread, in
/// emission order.
pub trait Sink {
    fn accept(&mut self, command: &JointCommand) -> Result<(), SinkError>;

    fn finish(&mut self) -> Result<(), SinkError> {
        Ok(())
    }
}

impl<S: Sink + ?Sized> Sink for Box<S> {
    fn accept(&mut self, command: &JointCommand) -> Result<(), SinkError> {
        (**self).accept(command)
    }

    fn finish(&mut self) -> Result<(), SinkError> {
        (**self).finish()
    }
}

#[derive(Debug, Default)]
pub struct NullSink;

impl Sink for NullSink {
    fn accept(&mut self, _: &JointCommand) -> Result<(), SinkError> {
        Ok(())
    }
}

/// Keeps every command in memory.
#[derive(Debug, Default, Clone)]
pub struct MemorySink {
    pub commands: Vec<JointCommand>,
}

impl Sink for MemorySink {
    fn accept(&mut self, command: &JointCommand) -> Result<(), SinkError> {
        self.commands.push(command.clone());
        Ok(())
    }
}

/// Writes a `CMDTRC01` trace file.
pub struct TraceSink {
    out: BufWriter<File>,
    buf: Vec<u8>,
}

impl TraceSink {
    pub fn create(path: impl AsRef<Path>) -> io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&TRACE_MAGIC)?;
        Ok(TraceSink { out, buf: Vec::new() })
    }
}

impl Sink for TraceSink {
    fn accept(&mut self, command: &JointCommand) -> Result<(), SinkError> {
        self.buf.clear();
        encode_trace_record_into(command, &mut self.buf);
        self.out.write_all(&self.buf).map_err(SinkError::Fatal)
    }

    fn finish(&mut self) -> Result<(), SinkError> {
        self.out.flush().map_err(SinkError::Fatal)
    }
}

impl Drop for TraceSink {
    fn drop(&mut self) {
        let _ = self.out.flush();
    }
}

/// One `CMD1` datagram per command.
#[derive(Debug)]
pub struct DatagramSink {
    socket: UdpSocket,
    target: SocketAddr,
    pub sent: u64,
    pub send_errors: u64,
}

impl DatagramSink {
    pub fn new(address: impl ToSocketAddrs) -> io::Result<Self> {
        let target = address
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "address resolves to nothing"))?;
        let bind: SocketAddr = if target.is_ipv4() {
            "0.0.0.0:0".parse().unwrap()
        } else {
            "[::]:0".parse().unwrap()
        };
        let socket = UdpSocket::bind(bind)?;
        Ok(DatagramSink {
            socket,
            target,
            sent: 0,
            send_errors: 0,
        })
    }

    pub fn target(&self) -> SocketAddr {
        self.target
    }
}

impl Sink for DatagramSink {
    fn accept(&mut self, command: &JointCommand) -> Result<(), SinkError> {
        match self.socket.send_to(&encode_datagram(command), self.target) {
            Ok(_) => {
                self.sent += 1;
                Ok(())
            }
            Err(e) => {
                self.send_errors += 1;
                Err(SinkError::Send(e))
            }
        }
    }
}

/// Audits commands as they are emitted and keeps a copy of the trace.
pub struct ValidatorSink {
    validator: IncrementalValidator,
    captured: Vec<JointCommand>,
}

impl ValidatorSink {
    pub fn new(model: RobotModel, thresholds: Thresholds) -> Self {
        ValidatorSink {
            validator: IncrementalValidator::new(model, thresholds),
            captured: Vec::new(),
        }
    }

    pub fn captured(&self) -> &[JointCommand] {
        &self.captured
    }

    pub fn report(&self) -> ValidationReport {
        self.validator.report()
    }
}

impl Sink for ValidatorSink {
    fn accept(&mut self, command: &JointCommand) -> Result<(), SinkError> {
        self.validator
            .push(&command.angles)
            .map_err(|e| SinkError::Fatal(io::Error::new(io::ErrorKind::InvalidData, e)))?;
        self.captured.push(command.clone());
        Ok(())
    }
}

/// Delivers every command to each inner sink in turn. A failing sink does
/// not keep the others from seeing the command; the first error is returned.
#[derive(Default)]
pub struct FanoutSink {
    pub sinks: Vec<Box<dyn Sink>>,
}

impl FanoutSink {
    pub fn new(sinks: Vec<Box<dyn Sink>>) -> Self {
        FanoutSink { sinks }
    }
}

impl Sink for FanoutSink {
    fn accept(&mut self, command: &JointCommand) -> Result<(), SinkError> {
        let mut first = None;
        for sink in &mut self.sinks {
            if let Err(e) = sink.accept(command) {
                first.get_or_insert(e);
            }
        }
        first.map_or(Ok(()), Err)
    }

    fn finish(&mut self) -> Result<(), SinkError> {
        let mut first = None;
        for sink in &mut self.sinks {
            if let Err(e) = sink.finish() {
                first.get_or_insert(e);
            }
        }
        first.map_or(Ok(()), Err)
    }
}
