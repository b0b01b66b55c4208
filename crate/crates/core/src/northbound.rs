//! Line protocol for reading and changing the priority policy at runtime.
//!
//! ```text
//! SET_PRIORITY <class> <q_mbps>   -> OK | ERR <reason>
//! DEL_PRIORITY <class>            -> OK | ERR unknown class
//! SET_BMIN <mbps>                 -> OK | ERR <reason>
//! GET_POLICY                      -> OK <class>=<q> ... b_min=<v>
//! ```

use crate::types::{parse_decimal, Bandwidth, ParseRateError, PriorityPolicy, Rational, TrafficClass};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NorthboundCommand {
    SetPriority { class: TrafficClass, goal: Bandwidth },
    DelPriority { class: TrafficClass },
    SetBMin { b_min: Bandwidth },
    GetPolicy,
}

/// Parses one command line. The error string is the reason reported after
/// `ERR`.
pub fn parse_command(line: &str) -> Result<NorthboundCommand, String> {
    let mut words = line.split_whitespace();
    let Some(verb) = words.next() else {
        return Err("empty command".to_string());
    };
    let args: Vec<&str> = words.collect();
    match verb {
        "SET_PRIORITY" => {
            let [class, q] = args[..] else {
                return Err("usage: SET_PRIORITY <class> <q_mbps>".to_string());
            };
            let q = parse_number(q)?;
            if q <= Rational::from_integer(0) {
                return Err("q must be > 0".to_string());
            }
            Ok(NorthboundCommand::SetPriority {
                class: TrafficClass::new(class).map_err(|e| e.to_string())?,
                goal: Bandwidth::new(q).map_err(|e| e.to_string())?,
            })
        }
        "DEL_PRIORITY" => {
            let [class] = args[..] else {
                return Err("usage: DEL_PRIORITY <class>".to_string());
            };
            Ok(NorthboundCommand::DelPriority {
                class: TrafficClass::new(class).map_err(|e| e.to_string())?,
            })
        }
        "SET_BMIN" => {
            let [value] = args[..] else {
                return Err("usage: SET_BMIN <mbps>".to_string());
            };
            let value = parse_number(value)?;
            let b_min = Bandwidth::new(value).map_err(|_| "b_min must be >= 0".to_string())?;
            Ok(NorthboundCommand::SetBMin { b_min })
        }
        "GET_POLICY" => {
            if !args.is_empty() {
                return Err("usage: GET_POLICY".to_string());
            }
            Ok(NorthboundCommand::GetPolicy)
        }
        other => Err(format!("unknown command {other}")),
    }
}

fn parse_number(text: &str) -> Result<Rational, String> {
    parse_decimal(text).map_err(|e| match e {
        ParseRateError::Malformed(s) => format!("malformed number {s}"),
        other => other.to_string(),
    })
}

/// Applies a command to `policy` and returns the reply line (without newline).
pub fn apply_command(policy: &mut PriorityPolicy, cmd: NorthboundCommand) -> String {
    match cmd {
        NorthboundCommand::SetPriority { class, goal } => match policy.set_goal(class, goal) {
            Ok(()) => "OK".to_string(),
            Err(e) => format!("ERR {e}"),
        },
        NorthboundCommand::DelPriority { class } => match policy.remove_goal(&class) {
            Some(_) => "OK".to_string(),
            None => "ERR unknown class".to_string(),
        },
        NorthboundCommand::SetBMin { b_min } => {
            policy.set_b_min(b_min);
            "OK".to_string()
        }
        NorthboundCommand::GetPolicy => render_policy(policy),
    }
}

/// `OK <class>=<q> ... b_min=<v>`, classes in name order.
pub fn render_policy(policy: &PriorityPolicy) -> String {
    let mut reply = String::from("OK");
    for (class, goal) in policy.goals() {
        reply.push_str(&format!(" {class}={goal}"));
    }
    reply.push_str(&format!(" b_min={}", policy.b_min()));
    reply
}

/// Parses and applies one line, producing the reply.
pub fn handle_line(policy: &mut PriorityPolicy, line: &str) -> String {
    match parse_command(line.trim_end_matches(['\r', '\n'])) {
        Ok(cmd) => apply_command(policy, cmd),
        Err(reason) => format!("ERR {reason}"),
    }
}
