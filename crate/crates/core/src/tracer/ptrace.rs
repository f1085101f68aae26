//! The Linux ptrace control loop. Everything here runs on the thread that
//! spawned the target, as ptrace requires.

use std::collections::{HashMap, HashSet};
use std::io::{IoSliceMut, Read};
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;

use log::{debug, warn};
use nix::errno::Errno;
use nix::sys::personality::{self, Persona};
use nix::sys::ptrace as pt;
use nix::sys::signal::{self, Signal};
use nix::sys::uio::{process_vm_readv, RemoteIoVec};
use nix::sys::wait::{waitpid, WaitPidFlag, WaitStatus};
use nix::unistd::Pid;

use super::snapshot::{
    entry_locations, read_return_value, snapshot_params, CallIds, Location, MemoryReader, RegisterFile,
};
use super::{TraceError, TraceRun, Tracer};
use crate::debuginfo::FunctionSig;
use crate::model::{CallRecord, CallStatus, ExitStatus, Param, TraceSession};

const INT3: u8 = 0xcc;

struct ProcessMemory {
    pid: Pid,
}

impl MemoryReader for ProcessMemory {
    fn read(&self, addr: u64, len: usize) -> Option<Vec<u8>> {
        if len == 0 {
            return Some(Vec::new());
        }
        let mut buf = vec![0u8; len];
        let remote = [RemoteIoVec { base: addr as usize, len }];
        match process_vm_readv(self.pid, &mut [IoSliceMut::new(&mut buf)], &remote) {
            Ok(n) if n == len => Some(buf),
            _ => None,
        }
    }
}

#[derive(Debug)]
struct Breakpoint {
    original: u8,
    entry: Option<usize>,
    /// Active calls waiting to return here.
    returns: usize,
}

impl Breakpoint {
    fn needed(&self) -> bool {
        self.entry.is_some() || self.returns > 0
    }
}

struct ActiveCall {
    function: usize,
    call_id: u64,
    return_address: u64,
    sp_after_return: u64,
    locations: Vec<Option<Location>>,
    inputs: Vec<Param>,
}

struct Session<'a> {
    pid: Pid,
    bias: u64,
    tracer: &'a Tracer<'a>,
    watched: &'a [FunctionSig],
    breakpoints: HashMap<u64, Breakpoint>,
    stacks: HashMap<Pid, Vec<ActiveCall>>,
    /// Cloned threads whose initial SIGSTOP has not arrived yet, and those
    /// whose SIGSTOP arrived before the clone event.
    awaiting_stop: HashSet<Pid>,
    stopped_early: HashSet<Pid>,
    ids: CallIds,
    session: TraceSession,
}

fn perr(what: &str, e: Errno) -> TraceError {
    TraceError::Ptrace(format!("{what}: {e}"))
}

fn write_byte(tid: Pid, addr: u64, byte: u8) -> Result<u8, Errno> {
    let word = pt::read(tid, addr as pt::AddressType)? as u64;
    let patched = (word & !0xff) | byte as u64;
    pt::write(tid, addr as pt::AddressType, patched as i64)?;
    Ok(word as u8)
}

fn registers(tid: Pid) -> Result<(RegisterFile, libc::user_regs_struct), Errno> {
    let r = pt::getregs(tid)?;
    // SAFETY: PTRACE_GETFPREGS fills a user_fpregs_struct for a stopped tracee.
    let mut fp: libc::user_fpregs_struct = unsafe { std::mem::zeroed() };
    let rc = unsafe {
        libc::ptrace(libc::PTRACE_GETFPREGS, tid.as_raw(), std::ptr::null_mut::<libc::c_void>(), &mut fp)
    };
    if rc < 0 {
        return Err(Errno::last());
    }
    let mut xmm = [[0u8; 16]; 8];
    for (i, x) in xmm.iter_mut().enumerate() {
        for j in 0..4 {
            x[j * 4..j * 4 + 4].copy_from_slice(&fp.xmm_space[i * 4 + j].to_le_bytes());
        }
    }
    let mut st0 = [0u8; 10];
    let st: Vec<u8> = fp.st_space[..3].iter().flat_map(|w| w.to_le_bytes()).collect();
    st0.copy_from_slice(&st[..10]);
    let file = RegisterFile {
        rax: r.rax,
        rdx: r.rdx,
        rsp: r.rsp,
        rip: r.rip,
        int_args: [r.rdi, r.rsi, r.rdx, r.rcx, r.r8, r.r9],
        xmm,
        st0,
    };
    Ok((file, r))
}

/// Load bias of a position-independent executable, from the first mapping
/// of the binary in /proc/<pid>/maps.
fn load_bias(pid: Pid, binary: &Path, load_vaddr: u64) -> Result<u64, TraceError> {
    let maps = std::fs::read_to_string(format!("/proc/{pid}/maps"))
        .map_err(|e| TraceError::Ptrace(format!("reading maps: {e}")))?;
    let canonical = std::fs::canonicalize(binary).unwrap_or_else(|_| binary.to_path_buf());
    for line in maps.lines() {
        let mut parts = line.split_whitespace();
        let (Some(range), Some(_perms), Some(offset)) = (parts.next(), parts.next(), parts.next()) else {
            continue;
        };
        let path = parts.nth(2).unwrap_or("");
        if Path::new(path) != canonical || u64::from_str_radix(offset, 16) != Ok(0) {
            continue;
        }
        let start = range.split('-').next().and_then(|s| u64::from_str_radix(s, 16).ok());
        if let Some(start) = start {
            return Ok(start - (load_vaddr & !0xfff));
        }
    }
    Err(TraceError::Ptrace(format!("{} is not mapped in the target", canonical.display())))
}

pub(super) fn run(tracer: &Tracer<'_>, watched: &[FunctionSig]) -> Result<TraceRun, TraceError> {
    let mut cmd = Command::new(&tracer.binary);
    cmd.args(&tracer.argv);
    for (k, v) in &tracer.env {
        cmd.env(k, v);
    }
    if tracer.capture_stdout {
        cmd.stdout(Stdio::piped());
    }
    // SAFETY: only async-signal-safe syscalls run between fork and exec.
    unsafe {
        cmd.pre_exec(|| {
            let persona = personality::get().map_err(std::io::Error::from)?;
            personality::set(persona | Persona::ADDR_NO_RANDOMIZE).map_err(std::io::Error::from)?;
            pt::traceme().map_err(std::io::Error::from)
        });
    }
    let mut child = cmd.spawn().map_err(|e| TraceError::LaunchFailure {
        path: tracer.binary.clone(),
        message: e.to_string(),
    })?;
    let pid = Pid::from_raw(child.id() as i32);
    let reader = child.stdout.take().map(|mut out| {
        thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = out.read_to_end(&mut buf);
            buf
        })
    });

    let timed_out = Arc::new(AtomicBool::new(false));
    let (cancel, cancelled) = mpsc::channel::<()>();
    let timeout = tracer.config.effective_timeout();
    let watchdog = {
        let timed_out = Arc::clone(&timed_out);
        thread::spawn(move || {
            if let Err(mpsc::RecvTimeoutError::Timeout) = cancelled.recv_timeout(timeout) {
                timed_out.store(true, Ordering::SeqCst);
                let _ = signal::kill(pid, Signal::SIGKILL);
            }
        })
    };

    let target = tracer.binary.display().to_string();
    let mut state = Session {
        pid,
        bias: 0,
        tracer,
        watched,
        breakpoints: HashMap::new(),
        stacks: HashMap::new(),
        awaiting_stop: HashSet::new(),
        stopped_early: HashSet::new(),
        ids: CallIds::default(),
        session: TraceSession::new(target, tracer.argv.clone()),
    };
    let result = state.drive();
    if result.is_err() {
        let _ = signal::kill(pid, Signal::SIGKILL);
        let _ = waitpid(pid, Some(WaitPidFlag::__WALL));
    }
    let _ = cancel.send(());
    let _ = watchdog.join();
    // The child was reaped through waitpid; drop the handle without waiting.
    drop(child);
    let stdout = reader.map(|h| h.join().unwrap_or_default());
    result?;

    let mut session = state.session;
    session.timed_out = timed_out.load(Ordering::SeqCst);
    Ok(TraceRun { session, stdout })
}

impl Session<'_> {
    fn drive(&mut self) -> Result<(), TraceError> {
        let wall = Some(WaitPidFlag::__WALL);
        match waitpid(self.pid, wall).map_err(|e| perr("initial wait", e))? {
            WaitStatus::Stopped(_, Signal::SIGTRAP) => {}
            other => {
                return Err(TraceError::LaunchFailure {
                    path: self.tracer.binary.clone(),
                    message: format!("unexpected initial state {other:?}"),
                })
            }
        }
        pt::setoptions(self.pid, pt::Options::PTRACE_O_TRACECLONE | pt::Options::PTRACE_O_EXITKILL)
            .map_err(|e| perr("setoptions", e))?;
        if self.tracer.index.pie {
            self.bias = load_bias(self.pid, &self.tracer.binary, self.tracer.index.load_vaddr)?;
        }
        for (i, f) in self.watched.iter().enumerate() {
            let addr = f.entry_address + self.bias;
            let original =
                write_byte(self.pid, addr, INT3).map_err(|_| TraceError::BreakpointFailure(f.name.clone()))?;
            self.breakpoints.insert(addr, Breakpoint { original, entry: Some(i), returns: 0 });
        }
        self.stacks.insert(self.pid, Vec::new());
        pt::cont(self.pid, None).map_err(|e| perr("cont", e))?;

        let flags = Some(WaitPidFlag::__WALL | WaitPidFlag::__WNOTHREAD);
        loop {
            let status = match waitpid(Pid::from_raw(-1), flags) {
                Ok(s) => s,
                Err(Errno::EINTR) => continue,
                Err(Errno::ECHILD) => break,
                Err(e) => return Err(perr("wait", e)),
            };
            match status {
                WaitStatus::Exited(tid, code) => {
                    if tid == self.pid {
                        self.finish(ExitStatus::Code(code));
                        break;
                    }
                    self.thread_gone(tid);
                }
                WaitStatus::Signaled(tid, sig, _) => {
                    if tid == self.pid {
                        self.finish(ExitStatus::Signal { signal: sig as i32, name: sig.as_str().to_string() });
                        break;
                    }
                    self.thread_gone(tid);
                }
                WaitStatus::PtraceEvent(tid, _, event) => {
                    if event == libc::PTRACE_EVENT_CLONE {
                        if let Ok(new) = pt::getevent(tid) {
                            let new = Pid::from_raw(new as i32);
                            self.stacks.entry(new).or_default();
                            if !self.stopped_early.remove(&new) {
                                self.awaiting_stop.insert(new);
                            }
                        }
                    }
                    let _ = pt::cont(tid, None);
                }
                WaitStatus::Stopped(tid, Signal::SIGTRAP) => self.on_trap(tid)?,
                WaitStatus::Stopped(tid, Signal::SIGSTOP)
                    if self.awaiting_stop.contains(&tid) || !self.stacks.contains_key(&tid) =>
                {
                    // Initial stop of a freshly cloned thread.
                    if !self.awaiting_stop.remove(&tid) {
                        self.stopped_early.insert(tid);
                        self.stacks.insert(tid, Vec::new());
                    }
                    let _ = pt::cont(tid, None);
                }
                WaitStatus::Stopped(tid, sig) => {
                    let _ = pt::cont(tid, Some(sig));
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn thread_gone(&mut self, tid: Pid) {
        if let Some(stack) = self.stacks.remove(&tid) {
            self.interrupt(stack);
        }
    }

    fn finish(&mut self, status: ExitStatus) {
        debug!("target exited: {status}");
        let stacks: Vec<_> = self.stacks.drain().map(|(_, s)| s).collect();
        for s in stacks {
            self.interrupt(s);
        }
        self.session.exit_status = status;
    }

    fn interrupt(&mut self, stack: Vec<ActiveCall>) {
        for call in stack {
            self.session.push(CallRecord {
                function: self.watched[call.function].name.clone(),
                call_id: call.call_id,
                status: CallStatus::Interrupted,
                inputs: call.inputs,
                outputs: Vec::new(),
                return_value: None,
                exit_pc: None,
            });
        }
    }

    fn on_trap(&mut self, tid: Pid) -> Result<(), TraceError> {
        let (regs, mut raw) = match registers(tid) {
            Ok(r) => r,
            Err(Errno::ESRCH) => return Ok(()),
            Err(e) => return Err(perr("getregs", e)),
        };
        let pc = regs.rip.wrapping_sub(1);
        let Some(bp) = self.breakpoints.get(&pc) else {
            let _ = pt::cont(tid, None);
            return Ok(());
        };
        let entry = bp.entry;
        if bp.returns > 0 {
            self.on_return(tid, pc, &regs);
        }
        if let Some(f) = entry {
            self.on_entry(tid, f, &regs)?;
        }
        raw.rip = pc;
        pt::setregs(tid, raw).map_err(|e| perr("setregs", e))?;
        self.step_over(tid, pc)
    }

    fn on_entry(&mut self, tid: Pid, function: usize, regs: &RegisterFile) -> Result<(), TraceError> {
        let mem = ProcessMemory { pid: self.pid };
        let sig = &self.watched[function];
        let index = self.tracer.index;
        let Some(ret) = mem.read(regs.rsp, 8) else {
            warn!("{}: unreadable return address", sig.name);
            return Ok(());
        };
        let return_address = u64::from_le_bytes(ret.try_into().expect("8 bytes"));
        let locations = entry_locations(&mem, regs, &sig.params, &index.types);
        let inputs = snapshot_params(&mem, &sig.params, &locations, &index.types, &self.tracer.config);
        let call_id = self.ids.next(&sig.name);
        self.stacks.entry(tid).or_default().push(ActiveCall {
            function,
            call_id,
            return_address,
            sp_after_return: regs.rsp + 8,
            locations,
            inputs,
        });
        match self.breakpoints.get_mut(&return_address) {
            Some(bp) => bp.returns += 1,
            None => {
                let original = write_byte(tid, return_address, INT3).map_err(|e| perr("return breakpoint", e))?;
                self.breakpoints.insert(return_address, Breakpoint { original, entry: None, returns: 1 });
            }
        }
        Ok(())
    }

    fn on_return(&mut self, tid: Pid, pc: u64, regs: &RegisterFile) {
        let stack = self.stacks.entry(tid).or_default();
        let Some(pos) = stack
            .iter()
            .rposition(|c| c.return_address == pc && c.sp_after_return == regs.rsp)
        else {
            return;
        };
        // Frames above the match were unwound without returning (longjmp).
        let abandoned = stack.split_off(pos + 1);
        let call = stack.pop().expect("matched position exists");
        for c in abandoned.iter().chain(std::iter::once(&call)) {
            self.release_return(tid, c.return_address);
        }
        self.interrupt(abandoned);

        let mem = ProcessMemory { pid: self.pid };
        let sig = &self.watched[call.function];
        let types = &self.tracer.index.types;
        let config = &self.tracer.config;
        let outputs = snapshot_params(&mem, &sig.params, &call.locations, types, config);
        let ret = read_return_value(&mem, regs, sig.return_type, &sig.ret_location, types, config);
        self.session.push(CallRecord {
            function: sig.name.clone(),
            call_id: call.call_id,
            status: CallStatus::Completed,
            inputs: call.inputs,
            outputs,
            return_value: Some(ret),
            exit_pc: Some(pc - self.bias),
        });
    }

    fn release_return(&mut self, tid: Pid, addr: u64) {
        if let Some(bp) = self.breakpoints.get_mut(&addr) {
            bp.returns = bp.returns.saturating_sub(1);
            if !bp.needed() {
                let original = bp.original;
                self.breakpoints.remove(&addr);
                let _ = write_byte(tid, addr, original);
            }
        }
    }

    /// Executes the original instruction at `pc` and re-arms the trap if it
    /// is still needed.
    fn step_over(&mut self, tid: Pid, pc: u64) -> Result<(), TraceError> {
        let Some(bp) = self.breakpoints.get(&pc) else {
            // Already removed and restored.
            let _ = pt::cont(tid, None);
            return Ok(());
        };
        let original = bp.original;
        write_byte(tid, pc, original).map_err(|e| perr("restore", e))?;
        pt::step(tid, None).map_err(|e| perr("step", e))?;
        let mut pending = None;
        loop {
            match waitpid(tid, Some(WaitPidFlag::__WALL)) {
                Ok(WaitStatus::Stopped(_, Signal::SIGTRAP)) => break,
                Ok(WaitStatus::Stopped(_, sig)) => {
                    // A signal arrived during the step; deliver it afterwards.
                    pending = Some(sig);
                    pt::step(tid, None).map_err(|e| perr("step", e))?;
                }
                Ok(WaitStatus::Exited(..)) | Ok(WaitStatus::Signaled(..)) => {
                    if tid == self.pid {
                        return Err(TraceError::Ptrace("target died while stepping".into()));
                    }
                    self.thread_gone(tid);
                    return Ok(());
                }
                Ok(_) | Err(Errno::EINTR) => continue,
                Err(e) => return Err(perr("wait after step", e)),
            }
        }
        if self.breakpoints.contains_key(&pc) {
            write_byte(tid, pc, INT3).map_err(|e| perr("re-arm", e))?;
        }
        pt::cont(tid, pending).map_err(|e| perr("cont", e))?;
        Ok(())
    }
}
