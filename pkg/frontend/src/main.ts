/** Browser entry point: mount the consultation screen on the page. */

import { initConsultApp } from './ui.js';

const root = document.getElementById('app');
if (root) {
  void initConsultApp(root, '');
}
