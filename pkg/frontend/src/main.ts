// Browser entry point: wires the session state machine to a real WebSocket,
// a <pre> board for the grids, a canvas for the arm, and the keyboard.

import { keyToAction } from "./keymap.js";
import { Pair, StateMsg } from "./protocol.js";
import { armScene, gridRows, toPixels } from "./render.js";
import { ClientSession, TransportFactory } from "./session.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

function wsUrl(): string {
  const proto = location.protocol === "https:" ? "wss" : "ws";
  return `${proto}://${location.host}/session`;
}

const webSocketTransport: TransportFactory = (handlers) => {
  const ws = new WebSocket(wsUrl());
  ws.onopen = () => handlers.onOpen();
  ws.onmessage = (ev) => handlers.onMessage(String(ev.data));
  ws.onclose = () => handlers.onClose();
  ws.onerror = () => ws.close();
  return {
    send: (text) => ws.send(text),
    close: () => ws.close(),
  };
};

function drawGrid(board: HTMLPreElement, state: StateMsg): void {
  if (state.cells.kind !== "grid") return;
  board.textContent = gridRows(state.cells).join("\n");
}

function drawArm(canvas: HTMLCanvasElement, state: StateMsg): void {
  if (state.cells.kind !== "reacher") return;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const size = canvas.width;
  const scene = armScene(state.cells);
  const px = (p: Pair) => toPixels(p, scene.reach, size);
  ctx.clearRect(0, 0, size, size);

  // reward disc around the target
  const [tx, ty] = px(scene.target);
  const rPx = (scene.rewardRadius / (2 * scene.reach)) * size;
  ctx.beginPath();
  ctx.arc(tx, ty, rPx, 0, 2 * Math.PI);
  ctx.fillStyle = "rgba(80, 160, 90, 0.15)";
  ctx.fill();
  ctx.strokeStyle = "#5aa05a";
  ctx.stroke();

  // links
  const pts = [scene.shoulder, scene.elbow, scene.tip].map(px);
  ctx.beginPath();
  ctx.moveTo(pts[0]![0], pts[0]![1]);
  ctx.lineTo(pts[1]![0], pts[1]![1]);
  ctx.lineTo(pts[2]![0], pts[2]![1]);
  ctx.lineWidth = 6;
  ctx.strokeStyle = "#334";
  ctx.stroke();

  // joints, tip, target
  for (const [x, y] of pts) {
    ctx.beginPath();
    ctx.arc(x, y, 7, 0, 2 * Math.PI);
    ctx.fillStyle = "#334";
    ctx.fill();
  }
  ctx.beginPath();
  ctx.arc(tx, ty, 5, 0, 2 * Math.PI);
  ctx.fillStyle = "#c33";
  ctx.fill();
}

function main(): void {
  const board = $<HTMLPreElement>("board");
  const canvas = $<HTMLCanvasElement>("arm");
  const status = $<HTMLElement>("status");
  const banner = $<HTMLElement>("banner");
  const taskSelect = $<HTMLSelectElement>("task");
  const seedInput = $<HTMLInputElement>("seed");
  const counters = $<HTMLElement>("counters");
  const sliders = $<HTMLElement>("sliders");
  const torque0 = $<HTMLInputElement>("torque0");
  const torque1 = $<HTMLInputElement>("torque1");

  let session = makeSession();

  function currentSeed(): number | undefined {
    const raw = seedInput.value.trim();
    if (raw === "") return undefined;
    const n = Number(raw);
    return Number.isFinite(n) ? n : undefined;
  }

  function makeSession(): ClientSession {
    const s = new ClientSession(webSocketTransport, {
      task: taskSelect.value || undefined,
      seed: currentSeed(),
    });
    s.onRender = (state) => {
      const isGrid = state.cells.kind === "grid";
      board.style.display = isGrid ? "block" : "none";
      canvas.style.display = isGrid ? "none" : "block";
      sliders.style.display = isGrid ? "none" : "flex";
      drawGrid(board, state);
      drawArm(canvas, state);
    };
    s.onUpdate = () => {
      status.textContent = s.statusLine;
      banner.textContent = s.banner;
      banner.style.display = s.banner ? "block" : "none";
      counters.textContent =
        `frames ${s.framesRendered} · states ${s.statesReceived} · ` +
        `actions ${s.actionsSent.length}`;
    };
    return s;
  }

  $<HTMLButtonElement>("connect").onclick = () => {
    session = makeSession();
    session.connect();
  };
  $<HTMLButtonElement>("reset").onclick = () => {
    if (!session.reset()) {
      session = makeSession();
      session.connect();
    }
  };
  $<HTMLButtonElement>("save").onclick = () => session.save();
  $<HTMLButtonElement>("apply-torque").onclick = () => {
    session.sendAction([Number(torque0.value), Number(torque1.value)]);
  };

  document.addEventListener("keydown", (ev) => {
    if (ev.target instanceof HTMLInputElement) return;
    if (keyToAction(ev.key) !== null) ev.preventDefault();
    session.handleKey(ev.key);
    session.onUpdate();
  });

  // task list comes from the service itself
  fetch("/tasks")
    .then((r) => r.json())
    .then((tasks: { env_id: string }[]) => {
      taskSelect.innerHTML = "";
      for (const t of tasks) {
        const opt = document.createElement("option");
        opt.value = t.env_id;
        opt.textContent = t.env_id;
        taskSelect.appendChild(opt);
      }
    })
    .catch(() => {
      banner.textContent = "could not list tasks — is the server running?";
      banner.style.display = "block";
    });

  session.connect();
}

document.addEventListener("DOMContentLoaded", main);
