/**
 * DOM wiring for the polishing loop: a format editor, the token grid with
 * lock toggles and rhyme-group colors, and the response history.
 */

import { Client } from "./api.js";
import { PolishSession, lockKey } from "./state.js";

const GROUP_COLORS = ["#e5735e", "#5e9ee5", "#63b96a", "#c678dd",
                      "#d19a66", "#56b6c2", "#be5046"];

function groupColor(group: string, groups: string[]): string {
  const i = Math.max(0, groups.indexOf(group));
  return GROUP_COLORS[i % GROUP_COLORS.length]!;
}

export function mount(root: HTMLElement): void {
  const session = new PolishSession(new Client(""));

  root.innerHTML = `
    <h1>format polish</h1>
    <p class="hint">One line per output line: <code>_</code> free slot,
    <code>_:A</code> rhyme slot in group A, a punctuation mark pins it,
    any other word is kept verbatim.</p>
    <textarea id="dsl" rows="4" spellcheck="false">_ _ _ _:A ,
_ _ _ _ _ _:A .</textarea>
    <div class="controls">
      <label>k <input id="k" type="number" value="32" min="1"></label>
      <label>seed <input id="seed" type="number" value="0"></label>
      <label><input id="hard" type="checkbox" checked> hard constraints</label>
      <button id="generate">generate</button>
      <button id="regenerate" disabled>regenerate (keep locked)</button>
    </div>
    <div id="error" class="error" hidden></div>
    <div id="grid" class="grid"></div>
    <h2>history</h2>
    <ol id="history" reversed></ol>
  `;

  const el = <T extends HTMLElement>(id: string) =>
    root.querySelector<T>(`#${id}`)!;
  const dsl = el<HTMLTextAreaElement>("dsl");
  const grid = el<HTMLDivElement>("grid");
  const historyList = el<HTMLOListElement>("history");
  const errorBox = el<HTMLDivElement>("error");
  const regenBtn = el<HTMLButtonElement>("regenerate");
  const genBtn = el<HTMLButtonElement>("generate");

  function options() {
    return {
      k: Number(el<HTMLInputElement>("k").value) || 32,
      seed: Number(el<HTMLInputElement>("seed").value) || 0,
      hard_constrain: el<HTMLInputElement>("hard").checked,
    };
  }

  function render(): void {
    errorBox.hidden = session.error === null;
    if (session.error !== null) {
      const pos = session.errorPosition;
      errorBox.textContent = pos
        ? `line ${pos.line}, col ${pos.col}: ${session.error}`
        : session.error;
    }
    regenBtn.disabled = session.pending || session.grid === null;
    genBtn.disabled = session.pending;
    grid.replaceChildren();
    if (!session.grid) return;
    const groups = [...new Set(session.grid.rhymeSlots.map((s) => s.group))];
    const slotGroup = new Map(
      session.grid.rhymeSlots.map((s) => [lockKey(s.line, s.index), s.group]),
    );
    session.grid.tokens.forEach((line, li) => {
      const row = document.createElement("div");
      row.className = "line";
      line.forEach((tok, ti) => {
        const span = document.createElement("button");
        span.className = "token";
        span.textContent = tok;
        const key = lockKey(li, ti);
        if (session.locks.has(key)) span.classList.add("locked");
        const group = slotGroup.get(key);
        if (group !== undefined) {
          span.style.borderBottomColor = groupColor(group, groups);
          span.classList.add("rhyme");
          span.title = `rhyme group ${group}`;
        }
        span.addEventListener("click", () => {
          session.toggleLock(li, ti);
          render();
        });
        row.appendChild(span);
      });
      grid.appendChild(row);
    });
    historyList.replaceChildren();
    for (const entry of [...session.history].reverse()) {
      const item = document.createElement("li");
      const text = entry.tokens.map((l) => l.join(" ")).join(" / ");
      const btn = document.createElement("button");
      btn.textContent = `#${entry.requestId}`;
      btn.addEventListener("click", () => {
        session.restore(entry.requestId);
        render();
      });
      item.append(btn, ` ${text}`);
      historyList.appendChild(item);
    }
  }

  genBtn.addEventListener("click", async () => {
    render();
    try {
      await session.generate(dsl.value, options());
    } catch {
      // session.error carries the message
    }
    render();
  });

  regenBtn.addEventListener("click", async () => {
    render();
    try {
      await session.regenerate(options());
    } catch {
      // session.error carries the message
    }
    render();
  });

  render();
}

if (typeof document !== "undefined") {
  const root = document.getElementById("app");
  if (root) mount(root);
}
