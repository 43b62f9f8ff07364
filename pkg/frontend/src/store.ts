/**
 * Session state for the workbench: the segment queue, the active segment,
 * its suggestion/matches/terms, per-segment draft targets, and inline
 * errors. One store instance per open project.
 *
 * Concurrency rule: at most one suggestion request is live. Navigating or
 * re-requesting bumps a sequence number and aborts the previous request;
 * responses carrying a stale sequence number are dropped, so a slow reply
 * can never paint another segment's suggestion.
 */

import {
  ApiError,
  MatchRow,
  StrategyKind,
  TermRow,
  WorkbenchApi,
} from './api';

export interface Segment {
  index: number;
  source: string;
  status: 'queued' | 'done';
  approvedTarget?: string;
}

export interface Suggestion {
  text: string;
  kind: string;
  warnings: string[];
}

export interface InlineError {
  message: string;
  stage?: string;
  canRetry: boolean;
}

export interface SessionSnapshot {
  projectId: string;
  queue: readonly Segment[];
  position: number;
  current: Segment | null;
  suggestion: Suggestion | null;
  matches: readonly MatchRow[];
  terms: readonly TermRow[];
  draft: string;
  strategy: StrategyKind;
  busy: boolean;
  error: InlineError | null;
  doneCount: number;
  totalCount: number;
}

type Listener = (snapshot: SessionSnapshot) => void;

type RetryAction =
  | { op: 'suggest' }
  | { op: 'approve'; target: string }
  | null;

export class SessionStore {
  private queue: Segment[] = [];
  private position = -1;
  private suggestion: Suggestion | null = null;
  private matches: MatchRow[] = [];
  private terms: TermRow[] = [];
  private readonly drafts = new Map<number, string>();
  private strategy: StrategyKind = 'few_shot_fuzzy';
  private busy = false;
  private error: InlineError | null = null;
  private retryAction: RetryAction = null;

  private requestSeq = 0;
  private controller: AbortController | null = null;
  private readonly listeners = new Set<Listener>();

  constructor(
    private readonly api: WorkbenchApi,
    readonly projectId: string,
    private readonly topK = 5,
  ) {}

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private emit(): void {
    const snapshot = this.snapshot();
    for (const listener of this.listeners) listener(snapshot);
  }

  snapshot(): SessionSnapshot {
    const current = this.position >= 0 ? (this.queue[this.position] ?? null) : null;
    return {
      projectId: this.projectId,
      queue: this.queue,
      position: this.position,
      current,
      suggestion: this.suggestion,
      matches: this.matches,
      terms: this.terms,
      draft: this.drafts.get(this.position) ?? '',
      strategy: this.strategy,
      busy: this.busy,
      error: this.error,
      doneCount: this.queue.filter((s) => s.status === 'done').length,
      totalCount: this.queue.length,
    };
  }

  loadQueue(sources: string[]): void {
    this.queue = sources.map((source, index) => ({
      index,
      source,
      status: 'queued' as const,
    }));
    this.position = this.queue.length ? 0 : -1;
    this.clearSegmentState();
    this.emit();
  }

  /** Navigate to a queue position. Any in-flight suggestion is superseded. */
  open(index: number): void {
    if (index < 0 || index >= this.queue.length) {
      throw new RangeError(`queue position ${index} out of range`);
    }
    this.position = index;
    this.clearSegmentState();
    this.emit();
  }

  private clearSegmentState(): void {
    this.supersede();
    this.suggestion = null;
    this.matches = [];
    this.terms = [];
    this.error = null;
    this.busy = false;
    this.retryAction = null;
  }

  private supersede(): number {
    this.requestSeq += 1;
    this.controller?.abort();
    this.controller = null;
    return this.requestSeq;
  }

  setDraft(text: string): void {
    if (this.position < 0) return;
    this.drafts.set(this.position, text);
    this.emit();
  }

  setStrategy(kind: StrategyKind): void {
    if (kind === this.strategy) return;
    this.strategy = kind;
    this.emit();
    if (this.position >= 0) {
      void this.requestSuggestion();
    }
  }

  async requestSuggestion(): Promise<void> {
    const current = this.position >= 0 ? this.queue[this.position] : undefined;
    if (!current) return;

    const seq = this.supersede();
    const controller = new AbortController();
    this.controller = controller;
    this.busy = true;
    this.error = null;
    this.retryAction = { op: 'suggest' };
    this.emit();

    try {
      const [matches, translation] = await Promise.all([
        this.api.matches(this.projectId, current.source, this.topK, controller.signal),
        this.api.translate(
          this.projectId,
          current.source,
          { kind: this.strategy, top_k: this.strategy === 'zero_shot' ? 0 : this.topK },
          controller.signal,
        ),
      ]);
      if (seq !== this.requestSeq) return; // superseded while waiting
      this.matches = matches;
      this.terms = translation.terms;
      this.suggestion = {
        text: translation.output,
        kind: translation.kind,
        warnings: translation.warnings,
      };
      this.busy = false;
      this.emit();
    } catch (err) {
      if (seq !== this.requestSeq) return; // stale failure, already moved on
      this.busy = false;
      this.error = toInlineError(err);
      this.emit();
    }
  }

  /**
   * Approve the draft (if the translator edited one) or the suggestion as
   * the segment's translation, then advance to the next queued segment and
   * request its suggestion.
   */
  async acceptOrEdit(overrideTarget?: string): Promise<void> {
    const current = this.position >= 0 ? this.queue[this.position] : undefined;
    if (!current) return;
    const draft = this.drafts.get(this.position)?.trim() ?? '';
    const target = overrideTarget ?? (draft || this.suggestion?.text || '');
    if (!target.trim()) {
      this.error = { message: 'nothing to approve yet', canRetry: false };
      this.emit();
      return;
    }

    this.busy = true;
    this.error = null;
    this.retryAction = { op: 'approve', target };
    this.emit();

    try {
      await this.api.approve(this.projectId, current.source, target);
    } catch (err) {
      // the draft stays in place so no work is lost
      this.busy = false;
      this.error = toInlineError(err);
      this.emit();
      return;
    }

    current.status = 'done';
    current.approvedTarget = target;
    this.drafts.delete(this.position);
    this.busy = false;
    this.retryAction = null;

    const next = this.nextQueuedPosition();
    if (next === null) {
      this.clearSegmentState();
      this.emit();
      return;
    }
    this.open(next);
    await this.requestSuggestion();
  }

  private nextQueuedPosition(): number | null {
    for (let i = this.position + 1; i < this.queue.length; i += 1) {
      if (this.queue[i]?.status === 'queued') return i;
    }
    for (let i = 0; i < this.position; i += 1) {
      if (this.queue[i]?.status === 'queued') return i;
    }
    return null;
  }

  /** Re-run whatever failed last (the inline error's retry affordance). */
  async retry(): Promise<void> {
    const action = this.retryAction;
    if (!action || !this.error?.canRetry) return;
    if (action.op === 'suggest') {
      await this.requestSuggestion();
    } else {
      await this.acceptOrEdit(action.target);
    }
  }
}

function toInlineError(err: unknown): InlineError {
  if (err instanceof ApiError) {
    return { message: err.message, stage: err.stage, canRetry: true };
  }
  const message = err instanceof Error ? err.message : String(err);
  return { message, canRetry: true };
}
