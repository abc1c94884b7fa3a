from rubiscot.cli import main

main()
