/**
 * DOM layer. Renders SessionSnapshot into a static skeleton and forwards
 * user events to the store. Framework-free on purpose: the state lives in
 * the store and this file only paints it.
 *
 * The service's prompt text is never requested or rendered here.
 */

import { StrategyKind } from './api';
import { SessionSnapshot, SessionStore } from './store';

const STRATEGIES: { kind: StrategyKind; label: string }[] = [
  { kind: 'zero_shot', label: 'Zero shot' },
  { kind: 'few_shot_fuzzy', label: 'Fuzzy matches' },
  { kind: 'few_shot_fuzzy_terms', label: 'Fuzzy + glossary terms' },
  { kind: 'few_shot_fuzzy_new_mt', label: 'Fuzzy + MT draft' },
];

export function createView(root: HTMLElement, store: SessionStore): () => void {
  const doc = root.ownerDocument;
  root.innerHTML = `
    <div class="workbench">
      <aside data-role="queue"></aside>
      <main>
        <div data-role="progress"></div>
        <div data-role="source" class="source"></div>
        <div data-role="suggestion" class="suggestion"></div>
        <textarea data-role="draft" rows="3" placeholder="Edit the translation"></textarea>
        <div class="controls">
          <select data-role="strategy"></select>
          <button data-role="refresh" type="button">Suggest</button>
          <button data-role="approve" type="button">Approve</button>
        </div>
        <div data-role="error" class="error" hidden>
          <span data-role="error-text"></span>
          <button data-role="retry" type="button">Retry</button>
        </div>
        <section>
          <h2>Matches</h2>
          <ol data-role="matches"></ol>
        </section>
        <section>
          <h2>Terms</h2>
          <ul data-role="terms"></ul>
        </section>
      </main>
    </div>
  `;

  const pick = <T extends HTMLElement>(role: string): T => {
    const el = root.querySelector(`[data-role="${role}"]`);
    if (!el) throw new Error(`missing view element: ${role}`);
    return el as T;
  };

  const queueEl = pick<HTMLElement>('queue');
  const progressEl = pick<HTMLElement>('progress');
  const sourceEl = pick<HTMLElement>('source');
  const suggestionEl = pick<HTMLElement>('suggestion');
  const draftEl = pick<HTMLTextAreaElement>('draft');
  const strategyEl = pick<HTMLSelectElement>('strategy');
  const refreshEl = pick<HTMLButtonElement>('refresh');
  const approveEl = pick<HTMLButtonElement>('approve');
  const errorEl = pick<HTMLElement>('error');
  const errorTextEl = pick<HTMLElement>('error-text');
  const retryEl = pick<HTMLButtonElement>('retry');
  const matchesEl = pick<HTMLElement>('matches');
  const termsEl = pick<HTMLElement>('terms');

  for (const { kind, label } of STRATEGIES) {
    const option = doc.createElement('option');
    option.value = kind;
    option.textContent = label;
    strategyEl.appendChild(option);
  }

  draftEl.addEventListener('input', () => store.setDraft(draftEl.value));
  strategyEl.addEventListener('change', () =>
    store.setStrategy(strategyEl.value as StrategyKind),
  );
  refreshEl.addEventListener('click', () => void store.requestSuggestion());
  approveEl.addEventListener('click', () => void store.acceptOrEdit());
  retryEl.addEventListener('click', () => void store.retry());
  queueEl.addEventListener('click', (event) => {
    const target = event.target as HTMLElement | null;
    const item = target?.closest('[data-index]') as HTMLElement | null;
    if (!item) return;
    store.open(Number(item.dataset.index));
    void store.requestSuggestion();
  });

  const render = (snap: SessionSnapshot): void => {
    progressEl.textContent = `${snap.doneCount} / ${snap.totalCount} approved`;

    queueEl.innerHTML = '';
    for (const segment of snap.queue) {
      const item = doc.createElement('div');
      item.dataset.index = String(segment.index);
      item.className =
        segment.index === snap.position ? 'segment active' : 'segment';
      const mark = segment.status === 'done' ? '[done] ' : '';
      item.textContent = `${mark}${segment.source}`;
      queueEl.appendChild(item);
    }

    sourceEl.textContent = snap.current?.source ?? '';
    suggestionEl.textContent = snap.busy
      ? 'Working on a suggestion...'
      : (snap.suggestion?.text ?? '');

    if (draftEl.value !== snap.draft) draftEl.value = snap.draft;
    if (strategyEl.value !== snap.strategy) strategyEl.value = snap.strategy;

    errorEl.hidden = snap.error === null;
    if (snap.error) {
      const where = snap.error.stage ? ` (${snap.error.stage})` : '';
      errorTextEl.textContent = `${snap.error.message}${where}`;
      retryEl.hidden = !snap.error.canRetry;
    }

    matchesEl.innerHTML = '';
    for (const match of snap.matches) {
      const li = doc.createElement('li');
      li.textContent = `${match.score.toFixed(3)}  ${match.source} -> ${match.target}`;
      matchesEl.appendChild(li);
    }

    termsEl.innerHTML = '';
    for (const term of snap.terms) {
      const li = doc.createElement('li');
      li.textContent = `${term.source} = ${term.target}`;
      termsEl.appendChild(li);
    }
  };

  render(store.snapshot());
  return store.subscribe(render);
}
