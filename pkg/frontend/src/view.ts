/**
 * Task rendering and span selection.
 *
 * The sentence is rendered as one element per Unicode scalar, so element
 * indices ARE the span offsets the server expects: selection never passes
 * through UTF-16 coordinates and round-trips exactly for any text.
 * Selection snaps to whole rendered characters; the task text itself is
 * never mutated client-side.
 *
 * Modes: MANUAL edits matcher pre-highlights freely, CORRECT removes or
 * re-draws model proposals, TEACH is read-only with accept/reject/ignore.
 * Keys: `a` accept, `x` reject (teach only), space ignore, Escape resets.
 */

import type { Decision, TaskPayload } from "./api.js";

export type UiSelection = { start: number; end: number };

export type SubmitIntent = {
  decision: Decision;
  spans: UiSelection[];
};

type SubmitHandler = (intent: SubmitIntent) => void;

function sortSpans(spans: UiSelection[]): UiSelection[] {
  return [...spans].sort((a, b) => a.start - b.start || a.end - b.end);
}

function overlaps(a: UiSelection, b: UiSelection): boolean {
  return a.start < b.end && b.start < a.end;
}

export class TaskView {
  private task: TaskPayload | null = null;
  private spans: UiSelection[] = [];
  private anchor: number | null = null;
  private chars: HTMLElement[] = [];

  onSubmit: SubmitHandler = () => {};

  constructor(private readonly root: HTMLElement) {}

  get currentTask(): TaskPayload | null {
    return this.task;
  }

  /** Spans currently marked, sorted; what an ACCEPT would submit. */
  getSpans(): UiSelection[] {
    return sortSpans(this.spans);
  }

  /** Re-render a task, keeping any still-valid spans (used after a 409). */
  render(task: TaskPayload, keepSpans = false): void {
    const limit = Array.from(task.text).length;
    const previous = keepSpans
      ? this.spans.filter((s) => s.start >= 0 && s.end <= limit && s.start < s.end)
      : null;
    this.task = task;
    this.anchor = null;
    this.spans = previous ?? task.pre_highlights.map((h) => ({ start: h.start, end: h.end }));
    this.rebuild();
  }

  renderDone(): void {
    this.task = null;
    this.root.replaceChildren();
    const done = document.createElement("p");
    done.className = "done";
    done.textContent = "Queue complete — nothing left to annotate.";
    this.root.appendChild(done);
  }

  private editable(): boolean {
    return this.task !== null && this.task.method !== "TEACH";
  }

  private rebuild(): void {
    const task = this.task;
    if (!task) return;
    this.root.replaceChildren();

    const header = document.createElement("div");
    header.className = "task-header";
    const badge = document.createElement("span");
    badge.className = `mode mode-${task.method.toLowerCase()}`;
    badge.textContent = task.method;
    header.appendChild(badge);
    const progress = document.createElement("span");
    progress.className = "progress";
    progress.textContent = `${task.progress.completed} / ${task.progress.total}`;
    header.appendChild(progress);
    this.root.appendChild(header);

    const textBox = document.createElement("div");
    textBox.className = "sentence";
    this.chars = [];
    Array.from(task.text).forEach((ch, index) => {
      const el = document.createElement("span");
      el.className = "ch";
      el.dataset.i = String(index);
      el.textContent = ch;
      if (this.editable()) {
        el.addEventListener("mousedown", (event) => {
          event.preventDefault();
          this.anchor = index;
        });
        el.addEventListener("mouseup", () => this.completeSelection(index));
      }
      this.chars.push(el);
      textBox.appendChild(el);
    });
    this.root.appendChild(textBox);

    if (task.method === "TEACH") {
      this.root.appendChild(this.confidenceBadges(task));
    }
    this.root.appendChild(this.buttonRow(task));
    this.paint();
  }

  private confidenceBadges(task: TaskPayload): HTMLElement {
    const row = document.createElement("div");
    row.className = "confidences";
    for (const highlight of task.pre_highlights) {
      const badge = document.createElement("span");
      badge.className = "confidence";
      const value = highlight.confidence;
      badge.textContent = value === null ? "—" : value.toFixed(2);
      row.appendChild(badge);
    }
    return row;
  }

  private buttonRow(task: TaskPayload): HTMLElement {
    const row = document.createElement("div");
    row.className = "buttons";
    const add = (label: string, cls: string, handler: () => void) => {
      const button = document.createElement("button");
      button.textContent = label;
      button.className = cls;
      button.addEventListener("click", handler);
      row.appendChild(button);
    };
    if (task.method === "TEACH") {
      add("Accept (a)", "primary accept", () => this.submit("ACCEPT"));
      add("Reject (x)", "primary reject", () => this.submit("REJECT"));
      add("Ignore (space)", "ignore", () => this.submit("IGNORE"));
    } else {
      add("Submit (a)", "primary accept", () => this.submit("ACCEPT"));
      add("Skip (space)", "ignore", () => this.submit("IGNORE"));
    }
    return row;
  }

  /** Apply highlight classes to the rendered characters. */
  private paint(): void {
    for (const el of this.chars) el.classList.remove("hl");
    for (const span of this.spans) {
      for (let i = span.start; i < span.end; i += 1) {
        this.chars[i]?.classList.add("hl");
      }
    }
  }

  private completeSelection(index: number): void {
    if (!this.editable() || this.anchor === null) return;
    const start = Math.min(this.anchor, index);
    const end = Math.max(this.anchor, index) + 1;
    this.anchor = null;
    if (start === end - 1) {
      // Plain click: remove the span under the caret, if any.
      const hit = this.spans.findIndex((s) => s.start <= start && start < s.end);
      if (hit >= 0) this.spans.splice(hit, 1);
      this.paint();
      return;
    }
    const selection = { start, end };
    if (this.spans.some((s) => overlaps(s, selection))) {
      return; // overlapping additions are ignored; remove the old span first
    }
    this.spans.push(selection);
    this.paint();
  }

  /** Keyboard entry point; returns true when the key was handled. */
  handleKey(event: KeyboardEvent): boolean {
    if (!this.task) return false;
    const teach = this.task.method === "TEACH";
    switch (event.key) {
      case "a":
        this.submit("ACCEPT");
        return true;
      case "x":
        if (teach) {
          this.submit("REJECT");
          return true;
        }
        return false;
      case " ":
        this.submit("IGNORE");
        return true;
      case "Escape":
        if (this.task) this.render(this.task);
        return true;
      default:
        return false;
    }
  }

  private submit(decision: Decision): void {
    if (!this.task) return;
    const spans = this.task.method === "TEACH" ? [] : this.getSpans();
    this.onSubmit({ decision, spans });
  }
}
