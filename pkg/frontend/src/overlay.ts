// Canvas skeleton overlay and probability-bar rendering.

import type { LandmarkRow } from "./kpjl.js";

const BLOCK_COLORS: Array<[number, number, string]> = [
  [0, 21, "#4fc3f7"], // left hand
  [21, 42, "#f06292"], // right hand
  [42, 510, "#455a64"], // face
  [510, 543, "#aed581"], // body
];

export function drawLandmarks(
  ctx: CanvasRenderingContext2D,
  lm: LandmarkRow[],
  width: number,
  height: number
): void {
  ctx.clearRect(0, 0, width, height);
  for (const [start, end, color] of BLOCK_COLORS) {
    ctx.fillStyle = color;
    for (let i = start; i < end && i < lm.length; i++) {
      const row = lm[i];
      if (row === null) continue;
      const r = i >= 42 && i < 510 ? 1 : 3; // face dots smaller
      ctx.beginPath();
      ctx.arc(row[0] * width, row[1] * height, r, 0, 2 * Math.PI);
      ctx.fill();
    }
  }
}

export function renderBars(
  container: HTMLElement,
  classes: string[],
  probs: number[],
  topLabel: string
): void {
  const rows = classes.map((name, i) => {
    const pct = (probs[i] * 100).toFixed(1);
    const highlight = name === topLabel ? " top" : "";
    return (
      `<div class="bar-row${highlight}">` +
      `<span class="bar-name">${name}</span>` +
      `<div class="bar-track"><div class="bar-fill" style="width:${pct}%"></div></div>` +
      `<span class="bar-pct">${pct}%</span></div>`
    );
  });
  container.innerHTML = rows.join("");
}

export function setStatus(el: HTMLElement, status: string, detail = ""): void {
  el.textContent = detail ? `${status} — ${detail}` : status;
  el.dataset.status = status;
}
