/** Side-effect entry: boots the app when loaded from index.html. */

import { start } from "./main.js";

start();
