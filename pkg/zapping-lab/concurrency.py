from threading import Lock

# concurrency.py

# Lock for writing the run manifest (rewritten after every finished trial)
manifest_lock = Lock()

# Lock for matplotlib figure creation (pyplot state is global)
plot_lock = Lock()
