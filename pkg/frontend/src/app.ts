/**
 * Session controller: fetch a task, render it, submit the decision, repeat.
 *
 * Submissions retry once on network failure with the same task id — the
 * server deduplicates, so a lost response cannot double-store.  A stale
 * 409 refetches the head of the queue and re-renders, keeping the user's
 * selections where the offsets are still valid.
 */

import { AnnotationApi, ApiError, type SubmitBody } from "./api.js";
import { TaskView, type SubmitIntent } from "./view.js";

export class AnnotationSession {
  private submitting = false;
  private optimisticCompleted: number | null = null;

  constructor(
    private readonly api: AnnotationApi,
    private readonly view: TaskView,
    private readonly status: HTMLElement | null = null,
  ) {
    view.onSubmit = (intent) => void this.submit(intent);
  }

  async start(): Promise<void> {
    await this.advance();
  }

  bindKeyboard(target: Pick<Document, "addEventListener">): void {
    target.addEventListener("keydown", (event) => {
      if (this.submitting) return;
      if (this.view.handleKey(event as KeyboardEvent)) {
        (event as KeyboardEvent).preventDefault();
      }
    });
  }

  private setStatus(text: string): void {
    if (this.status) this.status.textContent = text;
  }

  async advance(): Promise<void> {
    const task = await this.api.nextTask();
    if (task === null) {
      this.view.renderDone();
      this.setStatus("done");
      return;
    }
    this.optimisticCompleted = task.progress.completed;
    this.view.render(task);
    this.setStatus(`${task.progress.completed} / ${task.progress.total}`);
  }

  private async submit(intent: SubmitIntent): Promise<void> {
    const task = this.view.currentTask;
    if (!task || this.submitting) return;
    this.submitting = true;

    const body: SubmitBody = {
      task_id: task.task_id,
      decision: intent.decision,
      spans: task.method === "TEACH" ? null : intent.spans,
    };

    // Optimistic progress; reconciled with the server's answer below.
    this.optimisticCompleted = task.progress.completed + 1;
    this.setStatus(`${this.optimisticCompleted} / ${task.progress.total}`);

    try {
      const receipt = await this.submitWithRetry(body);
      this.setStatus(`${receipt.progress.completed} / ${receipt.progress.total}`);
      await this.advance();
    } catch (error) {
      if (error instanceof ApiError && error.stale) {
        // Someone moved the queue under us; re-sync but keep selections
        // where the offsets still fit the (possibly identical) head task.
        const head = await this.api.nextTask();
        if (head === null) {
          this.view.renderDone();
        } else {
          this.view.render(head, head.text === task.text);
        }
        this.setStatus("resynced");
      } else {
        this.setStatus(`error: ${String(error)}`);
        throw error;
      }
    } finally {
      this.submitting = false;
    }
  }

  private async submitWithRetry(body: SubmitBody) {
    try {
      return await this.api.submit(body);
    } catch (error) {
      if (error instanceof ApiError) throw error; // HTTP-level: no blind retry
      // Network failure: the response may have been lost after the server
      // stored the example; retrying the same task_id is idempotent.
      return await this.api.submit(body);
    }
  }
}
