/**
 * Entry point: wires the API client, session store, and DOM view together.
 * The host page supplies the mount node, the service base URL, the project
 * to open, and the segments to translate.
 */

import { WorkbenchApi } from './api';
import { SessionStore } from './store';
import { createView } from './view';

export interface WorkbenchOptions {
  baseUrl: string;
  projectId: string;
  sources: string[];
  topK?: number;
}

export interface Workbench {
  store: SessionStore;
  dispose: () => void;
}

export function mountWorkbench(root: HTMLElement, options: WorkbenchOptions): Workbench {
  const api = new WorkbenchApi(options.baseUrl);
  const store = new SessionStore(api, options.projectId, options.topK ?? 5);
  const unsubscribe = createView(root, store);
  store.loadQueue(options.sources);
  if (options.sources.length) {
    void store.requestSuggestion();
  }
  return { store, dispose: unsubscribe };
}

export { WorkbenchApi, ApiError } from './api';
export { SessionStore } from './store';
export { createView } from './view';
