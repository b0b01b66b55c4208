//! Transports for the northbound policy protocol: standard input or a local
//! TCP socket. Every line is queued to the controller, which answers between
//! simulation steps.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;

use log::{debug, info};

use meterqos::controller::{northbound_channel, NorthboundClient, NorthboundInbox};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NorthboundMode {
    Stdin,
    /// Port 0 picks a free port.
    Socket(u16),
}

impl NorthboundMode {
    pub fn parse(arg: &str) -> Result<Self, String> {
        if arg == "stdin" {
            return Ok(NorthboundMode::Stdin);
        }
        match arg.strip_prefix("socket:") {
            Some(port) => port
                .parse()
                .map(NorthboundMode::Socket)
                .map_err(|_| format!("invalid port '{port}'")),
            None => Err(format!("expected 'stdin' or 'socket:<port>', got '{arg}'")),
        }
    }
}

/// Starts the transport threads and returns the controller's side of the
/// queue.
pub fn serve(mode: NorthboundMode) -> io::Result<NorthboundInbox> {
    let (client, inbox) = northbound_channel();
    match mode {
        NorthboundMode::Stdin => {
            thread::spawn(move || {
                let stdin = io::stdin();
                let _ = converse(stdin.lock(), io::stdout(), &client);
            });
        }
        NorthboundMode::Socket(port) => {
            let listener = TcpListener::bind(("127.0.0.1", port))?;
            let addr = listener.local_addr()?;
            eprintln!("northbound listening on {addr}");
            thread::spawn(move || accept_loop(listener, client));
        }
    }
    Ok(inbox)
}

fn accept_loop(listener: TcpListener, client: NorthboundClient) {
    for stream in listener.incoming() {
        let Ok(stream) = stream else { continue };
        let client = client.clone();
        thread::spawn(move || {
            let peer = stream.peer_addr().ok();
            info!("northbound connection from {peer:?}");
            if let Err(e) = serve_stream(stream, &client) {
                debug!("northbound connection {peer:?} closed: {e}");
            }
        });
    }
}

fn serve_stream(stream: TcpStream, client: &NorthboundClient) -> io::Result<()> {
    let reader = BufReader::new(stream.try_clone()?);
    converse(reader, stream, client)
}

/// Forwards each line of `input` and writes one reply line per command.
fn converse<R: BufRead, W: Write>(input: R, mut output: W, client: &NorthboundClient) -> io::Result<()> {
    for line in input.lines() {
        let line = line?;
        let reply = client.send(&line);
        writeln!(output, "{reply}")?;
        output.flush()?;
    }
    Ok(())
}
